#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "garmentgen/camera.hpp"
#include "garmentgen/guidance.hpp"
#include "garmentgen/mesh.hpp"
#include "garmentgen/spatial.hpp"

namespace garmentgen {

/// Cameras on the equator (y up) looking at the origin. View k sits at
/// azimuth k * 360 / n, position radius * (sin az, 0, cos az).
struct Rig {
  std::vector<CameraView> views;
  int front = 0;
  /// Index of the view at azimuth 180, or -1 when n is odd.
  int back = -1;
};

Rig make_equatorial_rig(int n_views, double radius, int resolution, double fov_y_deg = 40.0);

/// UV-space texel grid. Texel (row, col) is centered at
/// uv = ((col + 0.5) / T, (row + 0.5) / T).
struct TexelMap {
  int size = 0;
  std::vector<int> face;  // -1 outside every UV triangle
  std::vector<Vec3> bary;
  std::vector<Vec3> point;
  std::vector<Vec3> normal;
  /// 4-connected components of covered texels, -1 outside.
  std::vector<int> chart;
  int num_charts = 0;
  /// Faces joined through shared UV edges.
  std::vector<int> face_chart;

  std::size_t index(int row, int col) const { return static_cast<std::size_t>(row) * static_cast<std::size_t>(size) + static_cast<std::size_t>(col); }
  std::size_t count() const { return face.size(); }
  bool covered(std::size_t texel) const { return face[texel] >= 0; }
};

/// Throws MeshError("missing UVs") when the mesh has no UV faces.
TexelMap build_texel_map(const TriMesh& mesh, int size);

struct Observation {
  int view = 0;
  /// Projection of the texel point in pixel coordinates.
  double px = 0.0;
  double py = 0.0;
  /// cos of the angle between the surface normal and the direction to the camera.
  double cosine = 0.0;
  /// False when no pixel near the projection shows the texel's surface, so
  /// the view cannot supply a value even though the point is visible.
  bool sampled = false;
};

struct CorrespondenceOptions {
  /// Occluders closer than the texel by less than this are ignored.
  double depth_tolerance = 1e-3;
};

struct ViewCorrespondence {
  const TriMesh* mesh = nullptr;
  Rig rig;
  TexelMap texels;
  std::vector<Raster> rasters;
  /// Per view and pixel: surface point, UV and face chart (-1 background).
  std::vector<std::vector<Vec3>> pixel_points;
  std::vector<std::vector<Vec2>> pixel_uvs;
  std::vector<std::vector<int>> pixel_charts;
  /// Per texel, in view order.
  std::vector<std::vector<Observation>> observations;
  double depth_tolerance = 1e-3;

  int num_views() const { return static_cast<int>(rig.views.size()); }
};

/// Texel visibility: the texel point faces the camera, projects inside the
/// image and no triangle crosses the camera ray more than `depth_tolerance`
/// in front of it. `mesh` must outlive the result.
ViewCorrespondence rasterize_correspondence(const TriMesh& mesh, const Rig& rig, int texture_size,
                                            const CorrespondenceOptions& options = {});

/// Dense alpha table: one row per texel, one column per view.
struct WeightTable {
  int views = 0;
  std::vector<double> alpha;

  double& at(std::size_t texel, int view) { return alpha[texel * static_cast<std::size_t>(views) + static_cast<std::size_t>(view)]; }
  double at(std::size_t texel, int view) const { return alpha[texel * static_cast<std::size_t>(views) + static_cast<std::size_t>(view)]; }
};

/// alpha = max(cos, 0)^k for every observation, zero elsewhere.
WeightTable view_weights(const ViewCorrespondence& corr, double exponent = 1.0);

/// Per texel with a positive weight sum, scales every view other than front
/// and back by 1 - (alpha_front + alpha_back) / sum. `back` may be -1.
void reweight_side_views(WeightTable& weights, int front, int back);

struct LatentTexture {
  int size = 0;
  int channels = 0;
  std::vector<double> data;
  std::vector<std::uint8_t> valid;

  LatentTexture() = default;
  LatentTexture(int size, int channels);

  double& at(std::size_t texel, int c) { return data[texel * static_cast<std::size_t>(channels) + static_cast<std::size_t>(c)]; }
  double at(std::size_t texel, int c) const { return data[texel * static_cast<std::size_t>(channels) + static_cast<std::size_t>(c)]; }
  std::size_t count() const { return valid.size(); }
};

using LatentViews = std::vector<LatentImage>;

/// Value of `view` at an observation: bilinear over the neighboring pixels
/// that show the texel's surface. Returns false if there are none.
bool backproject(const ViewCorrespondence& corr, std::size_t texel, const Observation& obs, const LatentImage& view,
                 std::span<double> out);

/// Weighted mean of the sampled observations of each texel. Texels with no
/// positive weight are invalid.
LatentTexture aggregate(const ViewCorrespondence& corr, const WeightTable& weights, const LatentViews& views);

struct Projection2D {
  LatentViews views;
  /// Per view and pixel: 1 where the value was kept from `previous`
  /// because no valid texel covers it (background pixels included).
  std::vector<std::vector<std::uint8_t>> retained;
};

/// Bilinear texture lookup at each covered pixel's UV using valid texels of
/// the same chart. Pixels without a lookup keep their value in `previous`
/// (zero if null).
Projection2D project_texture(const ViewCorrespondence& corr, const LatentTexture& texture,
                             const LatentViews* previous = nullptr);

/// Max over texels and channels of the spread (max - min) of the sampled
/// observations of each texel.
double cross_view_spread(const ViewCorrespondence& corr, const LatentViews& views);

/// Clean-view predictor z_{0|t} = D(z_t, tau, view).
class ViewDenoiser {
 public:
  virtual ~ViewDenoiser() = default;
  virtual LatentImage denoise(const LatentImage& z, double tau, int view) const = 0;
};

/// Always returns the projection of a fixed texture.
class ConstantTargetDenoiser : public ViewDenoiser {
 public:
  explicit ConstantTargetDenoiser(LatentViews target_views) : targets_(std::move(target_views)) {}
  LatentImage denoise(const LatentImage& z, double tau, int view) const override;

 protected:
  LatentViews targets_;
};

/// Projection of a fixed texture plus a per-view constant.
class BiasedDenoiser : public ConstantTargetDenoiser {
 public:
  BiasedDenoiser(LatentViews target_views, std::vector<double> biases);
  LatentImage denoise(const LatentImage& z, double tau, int view) const override;

 private:
  std::vector<double> biases_;
};

/// Projection of a fixed texture plus tau * sigma * N(0, 1) noise that is a
/// deterministic function of (seed, view, tau).
class NoisyDenoiser : public ConstantTargetDenoiser {
 public:
  NoisyDenoiser(LatentViews target_views, double sigma, std::uint64_t seed);
  LatentImage denoise(const LatentImage& z, double tau, int view) const override;

 private:
  double sigma_;
  std::uint64_t seed_;
};

struct MergeOptions {
  int steps = 20;
  int channels = 3;
  std::uint64_t seed = 0;
};

struct MergeResult {
  LatentTexture texture;
  LatentViews views;
  /// Spread of the noisy views before each step, then of the final views.
  std::vector<double> spread;
};

/// Synchronized sampling: noise texture -> consistent noisy views; per step
/// denoise every view, aggregate with `weights`, reproject with blend-through
/// and move the views to the next tau on a linear schedule from 1 to 0.
MergeResult cyclic_merge_run(const ViewDenoiser& denoiser, const ViewCorrespondence& corr, const WeightTable& weights,
                             const MergeOptions& options);

/// B_ij = log(w_d exp(-d_ij^2 / 2l^2) + w_m exp(-d'_ij^2 / 2l^2) + 1e-12)
/// with d' measured to the x-mirror of b_j.
Eigen::MatrixXd symmetric_attention_bias(std::span<const Vec3> a, std::span<const Vec3> b, double w_direct,
                                         double w_mirror, double length_scale);

/// softmax(Q K^T / sqrt(d) + bias) V, row-wise.
Eigen::MatrixXd apply_biased_attention(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k, const Eigen::MatrixXd& v,
                                       const Eigen::MatrixXd& bias);

struct FillReport {
  std::size_t filled = 0;
  /// Charts without any valid texel; filled with the global mean.
  std::vector<int> empty_charts;
};

/// Breadth-first dilation from valid texels within each chart of `texels`.
FillReport fill_uv_voids(LatentTexture& texture, const TexelMap& texels);

/// RGBA PNG of the first three channels clamped to [0, 1] (a single channel
/// is replicated) with the validity mask as alpha. Row 0 of the file is the
/// top of UV space (v = 1). `bit_depth` is 8 or 16.
void write_texture_png(const std::filesystem::path& path, const LatentTexture& texture, int bit_depth = 8);

/// `<stem>.json` header describing the arrays in `<stem>.bin`.
void write_correspondence_dump(const std::filesystem::path& stem, const ViewCorrespondence& corr,
                               const WeightTable& weights);

}  // namespace garmentgen
