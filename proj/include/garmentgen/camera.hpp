#pragma once

#include <vector>

#include "garmentgen/mesh.hpp"

namespace garmentgen {

enum class Projection { Perspective, Orthographic };

/// Pinhole or orthographic camera. Pixel (x, y) has its center at
/// (x + 0.5, y + 0.5); row 0 is the top of the image.
struct CameraView {
  Vec3 position = Vec3(0, 0, 3);
  Vec3 target = Vec3::Zero();
  Vec3 up = Vec3::UnitY();
  Projection projection = Projection::Perspective;
  double fov_y_deg = 45.0;
  /// Half-height of the view volume for orthographic cameras.
  double ortho_half_height = 1.0;
  int width = 256;
  int height = 256;

  /// Throws std::invalid_argument for a degenerate basis, non-positive
  /// resolution or an out-of-range field of view.
  void validate() const;

  struct Basis {
    Vec3 right;
    Vec3 up;
    Vec3 forward;
  };
  Basis basis() const;

  /// (pixel x, pixel y, view depth along the forward axis).
  Vec3 project(const Vec3& p) const;
  /// Ray through an image-plane location; the direction has unit length in
  /// the forward component so ray parameters equal view depth.
  void ray(double px, double py, Vec3& origin, Vec3& direction) const;
  /// Unit direction from `p` toward the camera.
  Vec3 toward_camera(const Vec3& p) const;
};

/// Depth-buffered triangle coverage. Barycentrics are perspective correct;
/// equal depths resolve to the lower face id.
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<int> face;      // -1 for background
  std::vector<Vec3> bary;
  std::vector<double> depth;

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x); }
  bool covered(int x, int y) const { return face[index(x, y)] >= 0; }
};

/// No backface culling; faces with a vertex at or behind the near plane of a
/// perspective camera are skipped.
Raster rasterize(const TriMesh& mesh, const CameraView& camera);

}  // namespace garmentgen
