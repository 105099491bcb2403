#include "garmentgen/camera.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <Eigen/Geometry>

namespace garmentgen {

namespace {

constexpr double kNear = 1e-6;

}  // namespace

void CameraView::validate() const {
  if (width <= 0 || height <= 0) throw std::invalid_argument("camera resolution must be positive");
  if (!position.allFinite() || !target.allFinite() || !up.allFinite()) {
    throw std::invalid_argument("camera vectors must be finite");
  }
  const Vec3 f = target - position;
  if (f.norm() < 1e-12) throw std::invalid_argument("camera position coincides with its target");
  if (f.normalized().cross(up).norm() < 1e-9) throw std::invalid_argument("camera up vector is parallel to the view direction");
  if (projection == Projection::Perspective && !(fov_y_deg > 0.0 && fov_y_deg < 180.0)) {
    throw std::invalid_argument("camera fov_y_deg must lie in (0, 180)");
  }
  if (projection == Projection::Orthographic && !(ortho_half_height > 0.0)) {
    throw std::invalid_argument("camera ortho_half_height must be positive");
  }
}

CameraView::Basis CameraView::basis() const {
  Basis b;
  b.forward = (target - position).normalized();
  b.right = b.forward.cross(up).normalized();
  b.up = b.right.cross(b.forward);
  return b;
}

Vec3 CameraView::project(const Vec3& p) const {
  const Basis b = basis();
  const Vec3 d = p - position;
  const double z = d.dot(b.forward);
  const double aspect = static_cast<double>(width) / height;
  double nx = d.dot(b.right);
  double ny = d.dot(b.up);
  if (projection == Projection::Perspective) {
    const double t = std::tan(0.5 * fov_y_deg * std::numbers::pi / 180.0);
    nx /= z * t * aspect;
    ny /= z * t;
  } else {
    nx /= ortho_half_height * aspect;
    ny /= ortho_half_height;
  }
  return {0.5 * (nx + 1.0) * width, 0.5 * (1.0 - ny) * height, z};
}

void CameraView::ray(double px, double py, Vec3& origin, Vec3& direction) const {
  const Basis b = basis();
  const double aspect = static_cast<double>(width) / height;
  const double nx = 2.0 * px / width - 1.0;
  const double ny = 1.0 - 2.0 * py / height;
  if (projection == Projection::Perspective) {
    const double t = std::tan(0.5 * fov_y_deg * std::numbers::pi / 180.0);
    origin = position;
    direction = b.forward + nx * t * aspect * b.right + ny * t * b.up;
  } else {
    origin = position + nx * ortho_half_height * aspect * b.right + ny * ortho_half_height * b.up;
    direction = b.forward;
  }
}

Vec3 CameraView::toward_camera(const Vec3& p) const {
  if (projection == Projection::Orthographic) return -basis().forward;
  return (position - p).normalized();
}

Raster rasterize(const TriMesh& mesh, const CameraView& camera) {
  camera.validate();
  Raster r;
  r.width = camera.width;
  r.height = camera.height;
  const std::size_t n = static_cast<std::size_t>(r.width) * static_cast<std::size_t>(r.height);
  r.face.assign(n, -1);
  r.bary.assign(n, Vec3::Zero());
  r.depth.assign(n, std::numeric_limits<double>::infinity());

  std::vector<Vec3> screen(mesh.vertices.size());
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) screen[v] = camera.project(mesh.vertices[v]);
  const bool perspective = camera.projection == Projection::Perspective;

  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& t = mesh.faces[f];
    const Vec3& a = screen[static_cast<std::size_t>(t[0])];
    const Vec3& b = screen[static_cast<std::size_t>(t[1])];
    const Vec3& c = screen[static_cast<std::size_t>(t[2])];
    if (perspective && (a.z() <= kNear || b.z() <= kNear || c.z() <= kNear)) continue;
    const double area = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
    if (std::abs(area) < 1e-14) continue;
    const double inv_area = 1.0 / area;

    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.x(), b.x(), c.x()}) - 0.5)));
    const int x1 = std::min(r.width - 1, static_cast<int>(std::ceil(std::max({a.x(), b.x(), c.x()}) - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.y(), b.y(), c.y()}) - 0.5)));
    const int y1 = std::min(r.height - 1, static_cast<int>(std::ceil(std::max({a.y(), b.y(), c.y()}) - 0.5)));

    for (int y = y0; y <= y1; ++y) {
      const double py = y + 0.5;
      for (int x = x0; x <= x1; ++x) {
        const double px = x + 0.5;
        const double l0 = ((b.x() - px) * (c.y() - py) - (b.y() - py) * (c.x() - px)) * inv_area;
        const double l1 = ((c.x() - px) * (a.y() - py) - (c.y() - py) * (a.x() - px)) * inv_area;
        const double l2 = 1.0 - l0 - l1;
        if (l0 < 0.0 || l1 < 0.0 || l2 < 0.0) continue;
        Vec3 bary;
        double depth;
        if (perspective) {
          const Vec3 w(l0 / a.z(), l1 / b.z(), l2 / c.z());
          const double s = w.sum();
          bary = w / s;
          depth = 1.0 / s;
        } else {
          bary = Vec3(l0, l1, l2);
          depth = l0 * a.z() + l1 * b.z() + l2 * c.z();
        }
        if (perspective && depth <= kNear) continue;
        const std::size_t i = r.index(x, y);
        if (depth < r.depth[i]) {
          r.depth[i] = depth;
          r.face[i] = static_cast<int>(f);
          r.bary[i] = bary;
        }
      }
    }
  }
  return r;
}

}  // namespace garmentgen
