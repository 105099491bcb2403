#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "garmentgen/guidance.hpp"
#include "garmentgen/losses.hpp"
#include "garmentgen/mesh.hpp"
#include "garmentgen/njf.hpp"

namespace garmentgen {

struct AdamState {
  double learning_rate = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;

  AdamState() = default;
  AdamState(std::size_t n, double lr) : learning_rate(lr), m(n, 0.0), v(n, 0.0) {}
};

/// A gradient or loss value that is NaN or infinite. `term` names the loss
/// that produced it.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(std::string term, int iteration);
  const std::string& term() const { return term_; }
  int iteration() const { return iteration_; }

 private:
  std::string term_;
  int iteration_;
};

/// Bias-corrected Adam update in place. Throws std::invalid_argument on a
/// size mismatch and NonFiniteError("gradient") on a non-finite entry, in
/// which case nothing is modified.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

struct TimestepSchedule {
  int warmup_iterations = 300;
  int early_min = 500;
  int late_min = 50;
  int max = 980;
};

/// (early_min, max) before `warmup_iterations`, (late_min, max) after.
std::pair<int, int> timestep_range(int iteration, const TimestepSchedule& schedule = {});

enum class GuidanceKind {
  None,
  /// Chamfer pull toward a target mesh.
  TargetShape,
  /// ISM on rendered normal latents with a field that pulls toward the
  /// normals of a target mesh seen from the same camera.
  RenderedTarget,
};

std::string to_string(GuidanceKind kind);
GuidanceKind parse_guidance_kind(const std::string& name);

struct GuidanceConfig {
  GuidanceKind kind = GuidanceKind::None;
  double weight = 1.0;
  /// t - s in timesteps.
  int interval = 50;
  int inversion_steps = 10;
  int interval_steps = 1;
  int latent_factor = 8;
  std::size_t shape_samples = 5000;
  CameraDistribution cameras;
};

struct DeformConfig {
  int iterations = 600;
  double learning_rate = 0.002;
  int batch_size = 4;
  std::size_t num_samples = 50000;
  LossWeights weights;
  TimestepSchedule schedule;
  std::uint64_t seed = 0;
  bool enable_symmetry = false;
  /// Fit the garment into [-1, 1]^3 (body and cylinders follow) while
  /// optimizing; the result is mapped back.
  bool normalize = true;
  int checkpoint_every = 100;
  GuidanceConfig guidance;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct IterationRecord {
  int iteration = 0;
  int timestep = 0;
  double ism = 0.0;
  GeometryTerms terms;
  double total = 0.0;
};

/// Optimizer state after `iteration` completed steps.
struct Checkpoint {
  int iteration = 0;
  JacobianField jacobians;
  AdamState adam;
  std::vector<IterationRecord> trace;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct DeformResult {
  TriMesh mesh;
  JacobianField jacobians;
  std::vector<IterationRecord> trace;
  Similarity normalization;
};

struct DeformHooks {
  /// Called every `checkpoint_every` steps with the garment in input
  /// coordinates.
  std::function<void(const Checkpoint&, const TriMesh&)> on_checkpoint;
  /// Continue from this state instead of the identity Jacobians.
  const Checkpoint* resume = nullptr;
};

/// Adam over per-face Jacobians. Each iteration solves for the vertices,
/// adds the guidance gradient and the weighted geometric losses on fresh
/// samples (seed + iteration), maps the vertex gradient through the Poisson
/// adjoint and takes one step. `target` is required by the guidance kinds
/// that use one and must share the template's coordinate frame.
DeformResult run_deformation(const TriMesh& tpl, const TriMesh& body, std::span<const BlockingCylinder> cylinders,
                             const DeformConfig& config, const TriMesh* target = nullptr,
                             const DeformHooks& hooks = {});

/// Fraction of `n` area-uniform samples of `garment` with negative signed
/// distance to the body.
double penetrating_fraction(const TriMesh& garment, const BodySdf& body, std::size_t n, std::uint64_t seed);

/// Largest axial depth of any of `n` samples inside a cylinder (0 if none).
double max_blocked_depth(const TriMesh& garment, std::span<const BlockingCylinder> cylinders, std::size_t n,
                         std::uint64_t seed);

/// iteration,L_ISM-proxy,L_coll,L_blk,L_sym,L_lap,L_nc,total
void write_loss_csv(const std::filesystem::path& path, std::span<const IterationRecord> trace);

}  // namespace garmentgen
