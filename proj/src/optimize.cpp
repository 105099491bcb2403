#include "garmentgen/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include <json.hpp>

#include "garmentgen/random.hpp"

namespace garmentgen {

namespace {

using nlohmann::json;

constexpr std::uint64_t kCameraStream = 0xca3e7a;
constexpr std::uint64_t kShapeStream = 0x5a3e;

bool all_finite(std::span<const Vec3> g) {
  return std::all_of(g.begin(), g.end(), [](const Vec3& v) { return v.allFinite(); });
}

std::vector<double> flatten(const JacobianField& j) {
  std::vector<double> out;
  out.reserve(j.size() * 9);
  for (const Mat3& m : j)
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) out.push_back(m(r, c));
  return out;
}

void unflatten(std::span<const double> flat, JacobianField& j) {
  std::size_t k = 0;
  for (Mat3& m : j)
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) m(r, c) = flat[k++];
}

// Finds the geometric term responsible for a non-finite value or gradient.
std::string blame_geometry(const TriMesh& mesh, const SamplePoints& samples, const BodySdf& sdf,
                           std::span<const BlockingCylinder> cylinders, const DeformConfig& cfg) {
  struct Term {
    const char* name;
    double LossWeights::*weight;
  };
  const Term terms[] = {{"L_coll", &LossWeights::collision},
                        {"L_blk", &LossWeights::blocking},
                        {"L_sym", &LossWeights::symmetry},
                        {"L_lap", &LossWeights::laplacian},
                        {"L_nc", &LossWeights::normal_consistency}};
  for (const Term& t : terms) {
    LossWeights only{0, 0, 0, 0, 0, cfg.weights.epsilon};
    only.*t.weight = cfg.weights.*t.weight;
    if (only.*t.weight == 0.0) continue;
    const GeometryLoss g = total_geometry_loss(mesh, samples, &sdf, cylinders, only, cfg.enable_symmetry);
    if (!std::isfinite(g.value) || !all_finite(g.grad)) return t.name;
  }
  return "geometry";
}

json record_to_json(const IterationRecord& r) {
  return json::array({r.iteration, r.timestep, r.ism, r.terms.collision, r.terms.blocking, r.terms.symmetry,
                      r.terms.laplacian, r.terms.normal_consistency, r.total});
}

IterationRecord record_from_json(const json& a) {
  IterationRecord r;
  r.iteration = a.at(0).get<int>();
  r.timestep = a.at(1).get<int>();
  r.ism = a.at(2).get<double>();
  r.terms.collision = a.at(3).get<double>();
  r.terms.blocking = a.at(4).get<double>();
  r.terms.symmetry = a.at(5).get<double>();
  r.terms.laplacian = a.at(6).get<double>();
  r.terms.normal_consistency = a.at(7).get<double>();
  r.total = a.at(8).get<double>();
  return r;
}

}  // namespace

NonFiniteError::NonFiniteError(std::string term, int iteration)
    : std::runtime_error("non-finite " + term + " at iteration " + std::to_string(iteration)),
      term_(std::move(term)),
      iteration_(iteration) {}

void adam_step(AdamState& s, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size() || s.m.size() != params.size() || s.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: parameter, gradient and moment sizes differ");
  }
  for (double g : grads)
    if (!std::isfinite(g)) throw NonFiniteError("gradient", static_cast<int>(s.step));
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * grads[i];
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grads[i] * grads[i];
    params[i] -= s.learning_rate * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + s.epsilon);
  }
}

std::pair<int, int> timestep_range(int iteration, const TimestepSchedule& schedule) {
  if (iteration < 0) throw std::invalid_argument("iteration must be non-negative");
  return {iteration < schedule.warmup_iterations ? schedule.early_min : schedule.late_min, schedule.max};
}

std::string to_string(GuidanceKind kind) {
  switch (kind) {
    case GuidanceKind::None: return "none";
    case GuidanceKind::TargetShape: return "target_shape";
    case GuidanceKind::RenderedTarget: return "rendered_target";
  }
  return "none";
}

GuidanceKind parse_guidance_kind(const std::string& name) {
  if (name == "none") return GuidanceKind::None;
  if (name == "target_shape") return GuidanceKind::TargetShape;
  if (name == "rendered_target") return GuidanceKind::RenderedTarget;
  throw std::invalid_argument("guidance.kind: unknown value '" + name +
                              "' (expected none, target_shape or rendered_target)");
}

void DeformConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& what) {
    throw std::invalid_argument(field + ": " + what);
  };
  if (iterations < 0) fail("iterations", "must be non-negative");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate", "must be positive");
  if (batch_size < 1) fail("batch_size", "must be at least 1");
  if (num_samples < 1) fail("num_samples", "must be at least 1");
  weights.validate();
  if (schedule.warmup_iterations < 0) fail("schedule.warmup_iterations", "must be non-negative");
  if (schedule.late_min < 0 || schedule.early_min < 0) fail("schedule", "timesteps must be non-negative");
  if (schedule.max > 1000) fail("schedule.max", "must be at most 1000");
  if (schedule.early_min > schedule.max || schedule.late_min > schedule.max) {
    fail("schedule", "minimum timesteps must not exceed schedule.max");
  }
  if (checkpoint_every < 1) fail("checkpoint_every", "must be at least 1");
  if (!(guidance.weight >= 0.0) || !std::isfinite(guidance.weight)) fail("guidance.weight", "must be non-negative");
  if (guidance.interval < 1) fail("guidance.interval", "must be at least 1");
  if (guidance.inversion_steps < 1) fail("guidance.inversion_steps", "must be at least 1");
  if (guidance.interval_steps < 1) fail("guidance.interval_steps", "must be at least 1");
  if (guidance.latent_factor < 1) fail("guidance.latent_factor", "must be at least 1");
  if (guidance.cameras.resolution % guidance.latent_factor != 0) {
    fail("guidance.cameras.resolution", "must be a multiple of guidance.latent_factor");
  }
  if (guidance.shape_samples < 1) fail("guidance.shape_samples", "must be at least 1");
  if (!(guidance.cameras.radius > 0.0)) fail("guidance.cameras.radius", "must be positive");
  if (guidance.cameras.elevation_min_deg > guidance.cameras.elevation_max_deg) {
    fail("guidance.cameras.elevation_min_deg", "must not exceed elevation_max_deg");
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& cp) {
  json trace = json::array();
  for (const IterationRecord& r : cp.trace) trace.push_back(record_to_json(r));
  const json doc = {{"format", "garmentgen-checkpoint"},
                    {"version", 1},
                    {"iteration", cp.iteration},
                    {"faces", cp.jacobians.size()},
                    {"jacobians", flatten(cp.jacobians)},
                    {"adam",
                     {{"learning_rate", cp.adam.learning_rate},
                      {"beta1", cp.adam.beta1},
                      {"beta2", cp.adam.beta2},
                      {"epsilon", cp.adam.epsilon},
                      {"step", cp.adam.step},
                      {"m", cp.adam.m},
                      {"v", cp.adam.v}}},
                    {"trace", trace}};
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << doc.dump() << '\n';
    if (!out) throw std::runtime_error("writing " + tmp.string() + " failed");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("checkpoint " + path.string() + ": " + e.what());
  }
  if (doc.value("format", "") != "garmentgen-checkpoint") {
    throw std::runtime_error(path.string() + " is not a garmentgen checkpoint");
  }
  Checkpoint cp;
  cp.iteration = doc.at("iteration").get<int>();
  const auto faces = doc.at("faces").get<std::size_t>();
  const auto flat = doc.at("jacobians").get<std::vector<double>>();
  if (flat.size() != faces * 9) throw std::runtime_error("checkpoint jacobian count does not match its face count");
  cp.jacobians.assign(faces, Mat3::Zero());
  unflatten(flat, cp.jacobians);
  const json& a = doc.at("adam");
  cp.adam.learning_rate = a.at("learning_rate").get<double>();
  cp.adam.beta1 = a.at("beta1").get<double>();
  cp.adam.beta2 = a.at("beta2").get<double>();
  cp.adam.epsilon = a.at("epsilon").get<double>();
  cp.adam.step = a.at("step").get<std::int64_t>();
  cp.adam.m = a.at("m").get<std::vector<double>>();
  cp.adam.v = a.at("v").get<std::vector<double>>();
  if (cp.adam.m.size() != flat.size() || cp.adam.v.size() != flat.size()) {
    throw std::runtime_error("checkpoint moment sizes do not match the jacobians");
  }
  for (const json& r : doc.at("trace")) cp.trace.push_back(record_from_json(r));
  return cp;
}

DeformResult run_deformation(const TriMesh& tpl, const TriMesh& body, std::span<const BlockingCylinder> cylinders,
                             const DeformConfig& cfg, const TriMesh* target, const DeformHooks& hooks) {
  cfg.validate();
  if (cfg.guidance.kind != GuidanceKind::None && target == nullptr) {
    throw std::invalid_argument("guidance.kind " + to_string(cfg.guidance.kind) + " needs a target mesh");
  }

  DeformResult result;
  result.normalization = cfg.normalize ? fit_unit_box(tpl) : Similarity{};
  const Similarity& sim = result.normalization;
  TriMesh garment = tpl;
  apply_similarity(garment, sim);
  TriMesh body_n = body;
  apply_similarity(body_n, sim);
  std::vector<BlockingCylinder> cyl(cylinders.begin(), cylinders.end());
  for (BlockingCylinder& c : cyl) {
    c.closed_end_center = sim.apply(c.closed_end_center);
    c.radius *= sim.scale;
  }
  TriMesh target_n;
  if (target) {
    target_n = *target;
    apply_similarity(target_n, sim);
  }

  const PoissonSystem poisson(garment);
  const BodySdf sdf(std::move(body_n));

  JacobianField jac = identity_jacobians(garment.num_faces());
  AdamState adam(jac.size() * 9, cfg.learning_rate);
  int start = 0;
  if (hooks.resume) {
    const Checkpoint& cp = *hooks.resume;
    if (cp.jacobians.size() != jac.size()) throw std::invalid_argument("checkpoint face count does not match the template");
    if (cp.iteration > cfg.iterations) throw std::invalid_argument("checkpoint is past the configured iteration count");
    jac = cp.jacobians;
    adam = cp.adam;
    result.trace = cp.trace;
    start = cp.iteration;
  }
  std::vector<double> params = flatten(jac);

  const IsmOptions ism_opts{cfg.guidance.inversion_steps, cfg.guidance.interval_steps};
  const ConditionToken cond{"target"};
  TriMesh mesh = garment;

  for (int it = start; it < cfg.iterations; ++it) {
    mesh.vertices = poisson.solve(jac);
    IterationRecord rec;
    rec.iteration = it;
    std::vector<Vec3> grad(mesh.num_vertices(), Vec3::Zero());

    if (cfg.guidance.kind != GuidanceKind::None && cfg.guidance.weight > 0.0) {
      const double w = cfg.guidance.weight;
      if (cfg.guidance.kind == GuidanceKind::TargetShape) {
        const ShapeGuidance sg = target_shape_guidance(mesh, target_n, cfg.guidance.shape_samples,
                                                       derive_seed(cfg.seed, kShapeStream, static_cast<std::uint64_t>(it)));
        rec.ism = w * sg.value;
        for (std::size_t v = 0; v < grad.size(); ++v) grad[v] += w * sg.grad[v];
      } else {
        Rng rng(derive_seed(cfg.seed, kCameraStream, static_cast<std::uint64_t>(it)));
        const auto [t_lo, t_hi] = timestep_range(it, cfg.schedule);
        const int t = std::min(t_hi, t_lo + static_cast<int>(uniform01(rng) * (t_hi - t_lo + 1)));
        const int s = std::max(t - cfg.guidance.interval, 0);
        rec.timestep = t;
        const auto cams = sample_cameras(rng, area_weighted_centroid(mesh), cfg.guidance.cameras, cfg.batch_size);
        const double share = w / cfg.batch_size;
        for (const CameraView& cam : cams) {
          const NormalRender r = render_normal_map(mesh, cam);
          const LatentImage x0 = encode_latent(normals_to_image(r), cfg.guidance.latent_factor);
          const LatentImage goal = encode_latent(normals_to_image(render_normal_map(target_n, cam)), cfg.guidance.latent_factor);
          const LatentImage g = ism_gradient(TargetLatentField(goal), x0, t, s, cond, 1.0, ism_opts);
          rec.ism += share * 0.5 * dot(g, g);
          const std::vector<Vec3> vg = backprop_normal_render(
              mesh, r, image_to_normal_grads(decode_gradient(g, cfg.guidance.latent_factor)));
          for (std::size_t v = 0; v < grad.size(); ++v) grad[v] += share * vg[v];
        }
      }
      if (!std::isfinite(rec.ism) || !all_finite(grad)) throw NonFiniteError("L_ISM", it);
    }

    const SamplePoints samples = sample_surface(mesh, cfg.num_samples, cfg.seed + static_cast<std::uint64_t>(it));
    const GeometryLoss geo = total_geometry_loss(mesh, samples, &sdf, cyl, cfg.weights, cfg.enable_symmetry);
    if (!std::isfinite(geo.value) || !all_finite(geo.grad)) {
      throw NonFiniteError(blame_geometry(mesh, samples, sdf, cyl, cfg), it);
    }
    for (std::size_t v = 0; v < grad.size(); ++v) grad[v] += geo.grad[v];
    rec.terms = geo.terms;
    rec.total = rec.ism + geo.value;
    result.trace.push_back(rec);

    const std::vector<double> gflat = flatten(poisson.backprop(grad));
    adam_step(adam, params, gflat);
    unflatten(params, jac);

    if ((it + 1) % cfg.checkpoint_every == 0 && hooks.on_checkpoint) {
      TriMesh snapshot = garment;
      snapshot.vertices = poisson.solve(jac);
      invert_similarity(snapshot, sim);
      hooks.on_checkpoint(Checkpoint{it + 1, jac, adam, result.trace}, snapshot);
    }
  }

  result.mesh = garment;
  result.mesh.vertices = poisson.solve(jac);
  invert_similarity(result.mesh, sim);
  result.jacobians = std::move(jac);
  return result;
}

double penetrating_fraction(const TriMesh& garment, const BodySdf& body, std::size_t n, std::uint64_t seed) {
  const SamplePoints s = sample_surface(garment, n, seed);
  std::size_t inside = 0;
  for (const Vec3& p : s.positions) inside += body.signed_distance(p) < 0.0 ? 1 : 0;
  return static_cast<double>(inside) / static_cast<double>(n);
}

double max_blocked_depth(const TriMesh& garment, std::span<const BlockingCylinder> cylinders, std::size_t n,
                         std::uint64_t seed) {
  const SamplePoints s = sample_surface(garment, n, seed);
  double worst = 0.0;
  for (const Vec3& p : s.positions)
    for (const BlockingCylinder& c : cylinders)
      if (c.contains(p)) worst = std::max(worst, c.axial(p));
  return worst;
}

void write_loss_csv(const std::filesystem::path& path, std::span<const IterationRecord> trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "iteration,L_ISM-proxy,L_coll,L_blk,L_sym,L_lap,L_nc,total\n";
  out << std::setprecision(17);
  for (const IterationRecord& r : trace) {
    out << r.iteration << ',' << r.ism << ',' << r.terms.collision << ',' << r.terms.blocking << ','
        << r.terms.symmetry << ',' << r.terms.laplacian << ',' << r.terms.normal_consistency << ',' << r.total
        << '\n';
  }
  if (!out) throw std::runtime_error("writing " + path.string() + " failed");
}

}  // namespace garmentgen
