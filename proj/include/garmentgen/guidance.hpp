#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "garmentgen/camera.hpp"
#include "garmentgen/mesh.hpp"
#include "garmentgen/random.hpp"

namespace garmentgen {

/// H x W x C grid stored row-major with interleaved channels.
struct LatentImage {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  LatentImage() = default;
  LatentImage(int h, int w, int c, double fill = 0.0);

  double& at(int y, int x, int c) { return data[offset(y, x, c)]; }
  double at(int y, int x, int c) const { return data[offset(y, x, c)]; }
  std::size_t offset(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels) +
           static_cast<std::size_t>(c);
  }
  std::size_t size() const { return data.size(); }
  bool same_shape(const LatentImage& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  bool all_finite() const;
};

double dot(const LatentImage& a, const LatentImage& b);
/// a += s * b
void axpy(LatentImage& a, double s, const LatentImage& b);

/// Stand-in for a text embedding; an empty optional is the null condition.
struct ConditionToken {
  std::string id;
  bool operator==(const ConditionToken&) const = default;
};
using Condition = std::optional<ConditionToken>;

/// Rectified-flow velocity v(x, t, cond) with t in timestep units [0, 1000]
/// (tau = t / 1000; 0 is clean, 1000 is noise). Fractional t is allowed so
/// integrators can take substeps.
class GuidanceField {
 public:
  virtual ~GuidanceField() = default;
  virtual LatentImage evaluate(const LatentImage& x, double t, const Condition& cond) const = 0;
};

class ZeroField : public GuidanceField {
 public:
  LatentImage evaluate(const LatentImage& x, double t, const Condition& cond) const override;
};

/// v = c everywhere, for every condition.
class ConstantField : public GuidanceField {
 public:
  explicit ConstantField(LatentImage value) : value_(std::move(value)) {}
  LatentImage evaluate(const LatentImage& x, double t, const Condition& cond) const override;

 private:
  LatentImage value_;
};

/// v = A x applied per pixel to the channel vector.
class LinearField : public GuidanceField {
 public:
  explicit LinearField(Eigen::MatrixXd a) : a_(std::move(a)) {}
  LatentImage evaluate(const LatentImage& x, double t, const Condition& cond) const override;

 private:
  Eigen::MatrixXd a_;
};

/// base(x, t, null) for the null condition, base(x, t, null) + delta otherwise.
class OffsetConditionalField : public GuidanceField {
 public:
  OffsetConditionalField(std::shared_ptr<const GuidanceField> base, LatentImage delta)
      : base_(std::move(base)), delta_(std::move(delta)) {}
  LatentImage evaluate(const LatentImage& x, double t, const Condition& cond) const override;

 private:
  std::shared_ptr<const GuidanceField> base_;
  LatentImage delta_;
};

/// v = anchor(cond) - x. Unknown condition ids throw std::out_of_range.
class PointAttractorField : public GuidanceField {
 public:
  PointAttractorField(LatentImage null_anchor, std::map<std::string, LatentImage> anchors)
      : null_anchor_(std::move(null_anchor)), anchors_(std::move(anchors)) {}
  LatentImage evaluate(const LatentImage& x, double t, const Condition& cond) const override;

 private:
  LatentImage null_anchor_;
  std::map<std::string, LatentImage> anchors_;
};

/// Conditional v = x - target, unconditional v = 0. With ISM this yields the
/// gradient of 0.5 |x - target|^2, so a rendered target mesh can drive the
/// full guidance chain without a diffusion model.
class TargetLatentField : public GuidanceField {
 public:
  explicit TargetLatentField(LatentImage target) : target_(std::move(target)) {}
  LatentImage evaluate(const LatentImage& x, double t, const Condition& cond) const override;

 private:
  LatentImage target_;
};

/// Unconditional Euler integration from t = 0 to `t` in `steps` equal
/// substeps. Throws std::invalid_argument unless 0 < t <= 1000 and steps >= 1,
/// std::runtime_error on a non-finite intermediate.
LatentImage invert_trajectory(const GuidanceField& field, const LatentImage& x0, double t, int steps);

/// Unconditional Euler integration between two timesteps.
LatentImage integrate_unconditional(const GuidanceField& field, const LatentImage& x, double t_from, double t_to,
                                    int steps);

struct IsmOptions {
  int inversion_steps = 10;
  /// Euler substeps between s and t.
  int interval_steps = 1;
};

/// w * [v(x_t, t, y) - v(x_s, s, null)] with x_s the inversion of x0 to s and
/// x_t the continuation from s to t. Requires 0 <= s < t <= 1000.
LatentImage ism_gradient(const GuidanceField& field, const LatentImage& x0, double t, double s,
                         const ConditionToken& y, double w, const IsmOptions& options = {});

/// Per-pixel normals with frozen provenance. Background pixels hold zero.
struct NormalRender {
  CameraView camera;
  Raster raster;
  std::vector<Vec3> normals;
};

NormalRender render_normal_map(const TriMesh& mesh, const CameraView& camera);

/// Recompute the pixel normals for new vertex positions, keeping the
/// pixel-to-face assignment and barycentrics of `render`.
void reshade_normals(const TriMesh& mesh, NormalRender& render);

/// Vertex gradient of a loss on the pixel normals, with visibility frozen.
std::vector<Vec3> backprop_normal_render(const TriMesh& mesh, const NormalRender& render,
                                         std::span<const Vec3> grad_normals);

LatentImage normals_to_image(const NormalRender& render);
std::vector<Vec3> image_to_normal_grads(const LatentImage& grad_image);

/// Block average by `factor` (must divide both image sides).
LatentImage encode_latent(const LatentImage& image, int factor);
/// Exact adjoint of encode_latent.
LatentImage decode_gradient(const LatentImage& grad_latent, int factor);

struct ShapeGuidance {
  double value = 0.0;
  std::vector<Vec3> grad;
};

/// Symmetric Chamfer distance between surface samples of `mesh` and `target`,
/// with the gradient scattered to the vertices of `mesh`. When both meshes
/// share faces, `mesh` is sampled at the target's faces and barycentrics.
ShapeGuidance target_shape_guidance(const TriMesh& mesh, const TriMesh& target, std::size_t n_samples,
                                    std::uint64_t seed);

struct CameraDistribution {
  double radius = 3.0;
  double fov_y_deg = 45.0;
  double elevation_min_deg = -15.0;
  double elevation_max_deg = 30.0;
  int resolution = 512;
};

/// Azimuth uniform in [0, 360), elevation uniform in [min, max], looking at
/// `center` from `radius`.
std::vector<CameraView> sample_cameras(Rng& rng, const Vec3& center, const CameraDistribution& dist, int count);

}  // namespace garmentgen
