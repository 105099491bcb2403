#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "garmentgen/config.hpp"
#include "garmentgen/image_io.hpp"
#include "garmentgen/losses.hpp"
#include "garmentgen/optimize.hpp"
#include "garmentgen/parallel.hpp"
#include "garmentgen/texsync.hpp"
#include "garmentgen/version.hpp"

namespace garmentgen::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

enum class LogLevel { Error, Warn, Info, Debug };

class Logger {
 public:
  Logger(std::ostream& sink, LogLevel level) : sink_(sink), level_(level) {}

  void error(const std::string& msg) const { write(LogLevel::Error, "error", msg); }
  void warn(const std::string& msg) const { write(LogLevel::Warn, "warn", msg); }
  void info(const std::string& msg) const { write(LogLevel::Info, "info", msg); }
  void debug(const std::string& msg) const { write(LogLevel::Debug, "debug", msg); }

 private:
  void write(LogLevel lvl, const char* tag, const std::string& msg) const {
    if (lvl <= level_) sink_ << "[" << tag << "] " << msg << "\n";
  }
  std::ostream& sink_;
  LogLevel level_;
};

/// Usage or configuration problem: exit 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void write_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out.flush()) throw std::runtime_error("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

void make_output_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory " + dir.string());
}

fs::path absolute_or_empty(const fs::path& p) { return p.empty() ? p : fs::absolute(p).lexically_normal(); }

TriMesh load_input_mesh(const fs::path& path, const std::string& field) {
  try {
    return load_mesh(path);
  } catch (const MeshError& e) {
    throw UsageError(field + ": " + e.what());
  }
}

std::vector<BlockingCylinder> load_input_cylinders(const fs::path& path) {
  try {
    return load_cylinders(path);
  } catch (const std::exception& e) {
    throw UsageError(std::string("cylinders: ") + e.what());
  }
}

json manifest_base(const std::string& command, const std::string& config_text, int threads) {
  return json{{"format", "garmentgen-manifest"},
              {"version", version()},
              {"command", command},
              {"config", json::parse(config_text)},
              {"config_hash", "fnv1a64:" + fnv1a_hex(config_text)},
              {"threads", threads}};
}

/// Normal map as RGBA: (n + 1) / 2 with coverage as alpha.
std::vector<double> normal_rgba(const NormalRender& render) {
  const Raster& r = render.raster;
  std::vector<double> px(static_cast<std::size_t>(r.width) * static_cast<std::size_t>(r.height) * 4, 0.0);
  for (std::size_t i = 0; i < render.normals.size(); ++i) {
    if (r.face[i] < 0) continue;
    for (int c = 0; c < 3; ++c) px[4 * i + static_cast<std::size_t>(c)] = 0.5 * (render.normals[i][c] + 1.0);
    px[4 * i + 3] = 1.0;
  }
  return px;
}

/// First three channels of a view latent (one channel is replicated) with
/// raster coverage as alpha.
std::vector<double> view_rgba(const LatentImage& img, const Raster& raster) {
  std::vector<double> px(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height) * 4, 0.0);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const std::size_t i = raster.index(x, y);
      if (!raster.covered(x, y)) continue;
      for (int c = 0; c < 3; ++c) px[4 * i + static_cast<std::size_t>(c)] = img.at(y, x, std::min(c, img.channels - 1));
      px[4 * i + 3] = 1.0;
    }
  }
  return px;
}

std::string view_name(int k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "view_%02d.png", k);
  return buf;
}

// ---------------------------------------------------------------- deform

struct RunOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string resume;
  bool print_config = false;
};

DeformRunConfig resolve_deform(const RunOptions& opt) {
  DeformRunConfig rc = load_deform_config(opt.config);
  if (opt.seed) rc.deform.seed = *opt.seed;
  rc.template_mesh = absolute_or_empty(rc.template_mesh);
  rc.body_mesh = absolute_or_empty(rc.body_mesh);
  if (rc.cylinders) rc.cylinders = absolute_or_empty(*rc.cylinders);
  if (rc.target_mesh) rc.target_mesh = absolute_or_empty(*rc.target_mesh);
  return rc;
}

void write_failure(const fs::path& path, const std::string& term, int iteration, const std::string& message,
                   const std::vector<IterationRecord>& recent) {
  json trace = json::array();
  for (const auto& r : recent) {
    trace.push_back({{"iteration", r.iteration},
                     {"timestep", r.timestep},
                     {"L_ISM-proxy", r.ism},
                     {"L_coll", r.terms.collision},
                     {"L_blk", r.terms.blocking},
                     {"L_sym", r.terms.symmetry},
                     {"L_lap", r.terms.laplacian},
                     {"L_nc", r.terms.normal_consistency},
                     {"total", r.total}});
  }
  json doc{{"status", "failed"}, {"term", term}, {"iteration", iteration}, {"message", message}, {"last_checkpoint_trace", trace}};
  write_atomic(path, doc.dump(2) + "\n");
}

int cmd_deform(const RunOptions& opt, int threads, std::ostream& out, const Logger& log) {
  if (opt.print_config) {
    out << format_config(opt.config.empty() ? DeformRunConfig{} : resolve_deform(opt)) << "\n";
    return kOk;
  }
  if (opt.config.empty()) throw UsageError("deform: --config is required");
  if (opt.out.empty()) throw UsageError("deform: --out is required");

  const auto t_start = Clock::now();
  const DeformRunConfig rc = resolve_deform(opt);
  const std::string config_text = format_config(rc);
  const TriMesh tpl = load_input_mesh(rc.template_mesh, "template");
  const TriMesh body = load_input_mesh(rc.body_mesh, "body");
  std::vector<BlockingCylinder> cylinders;
  if (rc.cylinders) cylinders = load_input_cylinders(*rc.cylinders);
  std::optional<TriMesh> target;
  if (rc.target_mesh) target = load_input_mesh(*rc.target_mesh, "target");
  std::optional<Checkpoint> resume;
  if (!opt.resume.empty()) {
    try {
      resume = load_checkpoint(opt.resume);
    } catch (const std::exception& e) {
      throw UsageError(std::string("resume: ") + e.what());
    }
    if (resume->jacobians.size() != tpl.num_faces()) {
      throw UsageError("resume: checkpoint has " + std::to_string(resume->jacobians.size()) +
                       " Jacobians but the template has " + std::to_string(tpl.num_faces()) + " faces");
    }
  }
  const double t_load = seconds_since(t_start);

  const fs::path dir(opt.out);
  make_output_dir(dir / "checkpoints");
  std::vector<std::string> checkpoint_files;
  std::vector<IterationRecord> last_trace;
  DeformHooks hooks;
  hooks.resume = resume ? &*resume : nullptr;
  hooks.on_checkpoint = [&](const Checkpoint& cp, const TriMesh& mesh) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "iter_%05d", cp.iteration);
    const fs::path base = dir / "checkpoints" / stem;
    save_checkpoint(base.string() + ".json", cp);
    save_mesh(mesh, base.string() + ".obj");
    checkpoint_files.push_back((fs::path("checkpoints") / (std::string(stem) + ".json")).string());
    last_trace.assign(cp.trace.end() - std::min<std::ptrdiff_t>(10, static_cast<std::ptrdiff_t>(cp.trace.size())),
                      cp.trace.end());
    const auto& r = cp.trace.back();
    log.info("iteration " + std::to_string(cp.iteration) + " total " + std::to_string(r.total) + " L_coll " +
             std::to_string(r.terms.collision) + " L_blk " + std::to_string(r.terms.blocking));
  };

  log.info("deform: " + std::to_string(tpl.num_faces()) + " faces, " + std::to_string(rc.deform.iterations) +
           " iterations, seed " + std::to_string(rc.deform.seed) + (resume ? ", resuming at " + std::to_string(resume->iteration) : ""));
  const auto t_opt = Clock::now();
  DeformResult result;
  try {
    result = run_deformation(tpl, body, cylinders, rc.deform, target ? &*target : nullptr, hooks);
  } catch (const NonFiniteError& e) {
    write_failure(dir / "failure.json", e.term(), e.iteration(), e.what(), last_trace);
    log.error(std::string(e.what()) + " (see " + (dir / "failure.json").string() + ")");
    return kRuntime;
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  } catch (const std::exception& e) {
    write_failure(dir / "failure.json", "", -1, e.what(), last_trace);
    log.error(e.what());
    return kRuntime;
  }
  const double t_optimize = seconds_since(t_opt);

  const auto t_write = Clock::now();
  save_mesh(result.mesh, dir / "mesh.obj");
  write_loss_csv(dir / "loss.csv", result.trace);
  json manifest = manifest_base("deform", config_text, threads);
  manifest["seeds"] = {{"base", rc.deform.seed},
                       {"surface_samples", "base + iteration"},
                       {"cameras", "derive_seed(base, 0xca3e7a, iteration)"},
                       {"shape_guidance", "derive_seed(base, 0x5a3e, iteration)"}};
  manifest["resumed_from"] = opt.resume.empty() ? json(nullptr) : json(fs::absolute(opt.resume).string());
  manifest["outputs"] = {{"mesh", "mesh.obj"}, {"loss_csv", "loss.csv"}, {"checkpoints", checkpoint_files}};
  if (!result.trace.empty()) {
    const auto& r = result.trace.back();
    manifest["final"] = {{"iteration", r.iteration}, {"total", r.total}, {"L_coll", r.terms.collision}, {"L_blk", r.terms.blocking}};
  }
  manifest["timing_seconds"] = {{"load", t_load}, {"optimize", t_optimize}, {"write", seconds_since(t_write)}};
  write_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
  log.info("deform: wrote " + (dir / "mesh.obj").string());
  return kOk;
}

// ---------------------------------------------------------------- texsync

TexsyncRunConfig resolve_texsync(const RunOptions& opt) {
  TexsyncRunConfig rc = load_texsync_config(opt.config);
  if (opt.seed) rc.merge.seed = *opt.seed;
  rc.mesh = absolute_or_empty(rc.mesh);
  if (rc.target_texture) rc.target_texture = absolute_or_empty(*rc.target_texture);
  return rc;
}

/// Ground-truth texture: a PNG sampled at texel centers, or the texel's
/// position in the unit box as RGB.
LatentTexture make_target_texture(const TexsyncRunConfig& rc, const TexelMap& texels) {
  LatentTexture tex(texels.size, rc.merge.channels);
  std::optional<PngImage> png;
  if (rc.target_texture) {
    try {
      png = read_png(*rc.target_texture);
    } catch (const std::exception& e) {
      throw UsageError(std::string("denoiser.target_texture: ") + e.what());
    }
  }
  const int T = texels.size;
  for (int row = 0; row < T; ++row) {
    for (int col = 0; col < T; ++col) {
      const std::size_t t = texels.index(row, col);
      if (!texels.covered(t)) continue;
      double rgb[3];
      if (png) {
        const double u = (col + 0.5) / T;
        const double v = (row + 0.5) / T;
        const int x = std::clamp(static_cast<int>(u * png->width), 0, png->width - 1);
        const int y = std::clamp(static_cast<int>((1.0 - v) * png->height), 0, png->height - 1);
        const std::size_t base = (static_cast<std::size_t>(y) * static_cast<std::size_t>(png->width) + static_cast<std::size_t>(x)) *
                                 static_cast<std::size_t>(png->channels);
        const int color_channels = png->channels >= 3 ? 3 : 1;
        for (int c = 0; c < 3; ++c) rgb[c] = png->samples[base + static_cast<std::size_t>(std::min(c, color_channels - 1))];
      } else {
        for (int c = 0; c < 3; ++c) rgb[c] = std::clamp(0.5 * (texels.point[t][c] + 1.0), 0.0, 1.0);
      }
      for (int c = 0; c < tex.channels; ++c) tex.at(t, c) = rgb[c % 3];
      tex.valid[t] = 1;
    }
  }
  return tex;
}

int cmd_texsync(const RunOptions& opt, int threads, std::ostream& out, const Logger& log) {
  if (opt.print_config) {
    out << format_config(opt.config.empty() ? TexsyncRunConfig{} : resolve_texsync(opt)) << "\n";
    return kOk;
  }
  if (opt.config.empty()) throw UsageError("texsync: --config is required");
  if (opt.out.empty()) throw UsageError("texsync: --out is required");
  if (!opt.resume.empty()) throw UsageError("texsync: --resume only applies to deform");

  const auto t_start = Clock::now();
  const TexsyncRunConfig rc = resolve_texsync(opt);
  const std::string config_text = format_config(rc);
  TriMesh mesh = load_input_mesh(rc.mesh, "mesh");
  if (!mesh.has_uvs()) throw UsageError("mesh: missing UVs (" + rc.mesh.string() + ")");
  apply_similarity(mesh, fit_unit_box(mesh));
  const double t_load = seconds_since(t_start);

  const auto t_corr = Clock::now();
  const Rig rig = make_equatorial_rig(rc.n_views, rc.view_radius, rc.view_resolution, rc.fov_y_deg);
  const ViewCorrespondence corr = rasterize_correspondence(mesh, rig, rc.texture_size, {rc.depth_tolerance});
  WeightTable weights = view_weights(corr, rc.weight_exponent);
  if (rc.reweight) reweight_side_views(weights, rig.front, rig.back);
  const LatentTexture target = make_target_texture(rc, corr.texels);
  LatentViews target_views = project_texture(corr, target).views;
  const double t_correspondence = seconds_since(t_corr);
  log.info("texsync: " + std::to_string(rc.n_views) + " views, texture " + std::to_string(rc.texture_size) + ", " +
           std::to_string(rc.merge.steps) + " merge steps, denoiser " + to_string(rc.denoiser));

  const auto t_merge = Clock::now();
  std::unique_ptr<ViewDenoiser> denoiser;
  switch (rc.denoiser) {
    case DenoiserKind::ConstantTarget:
      denoiser = std::make_unique<ConstantTargetDenoiser>(std::move(target_views));
      break;
    case DenoiserKind::Biased:
      denoiser = std::make_unique<BiasedDenoiser>(std::move(target_views), rc.biases);
      break;
    case DenoiserKind::Noisy:
      denoiser = std::make_unique<NoisyDenoiser>(std::move(target_views), rc.noise_sigma, rc.merge.seed);
      break;
  }
  MergeResult result = cyclic_merge_run(*denoiser, corr, weights, rc.merge);
  const double t_merging = seconds_since(t_merge);

  // Error against the ground truth on texels the views observed.
  double max_err = 0.0;
  double sum_err = 0.0;
  std::size_t compared = 0;
  std::size_t covered = 0;
  for (std::size_t t = 0; t < result.texture.count(); ++t) {
    if (corr.texels.covered(t)) ++covered;
    if (!result.texture.valid[t] || !target.valid[t]) continue;
    ++compared;
    for (int c = 0; c < result.texture.channels; ++c) {
      const double e = std::abs(result.texture.at(t, c) - target.at(t, c));
      max_err = std::max(max_err, e);
      sum_err += e;
    }
  }
  FillReport fill;
  if (rc.fill_voids) fill = fill_uv_voids(result.texture, corr.texels);

  const auto t_write = Clock::now();
  const fs::path dir(opt.out);
  make_output_dir(dir / "views");
  write_texture_png(dir / "texture.png", result.texture, rc.bit_depth);
  std::vector<std::string> view_files;
  for (int k = 0; k < corr.num_views(); ++k) {
    const auto& img = result.views[static_cast<std::size_t>(k)];
    write_png(dir / "views" / view_name(k), img.width, img.height, 4, view_rgba(img, corr.rasters[static_cast<std::size_t>(k)]),
              rc.bit_depth);
    view_files.push_back((fs::path("views") / view_name(k)).string());
  }
  json outputs{{"texture", "texture.png"}, {"views", view_files}, {"metrics", "metrics.json"}};
  if (rc.dump_correspondence) {
    write_correspondence_dump(dir / "correspondence", corr, weights);
    outputs["correspondence"] = {"correspondence.json", "correspondence.bin"};
  }

  const double channels = static_cast<double>(result.texture.channels);
  json metrics{{"spread_per_step", result.spread},
               {"final_spread", result.spread.empty() ? 0.0 : result.spread.back()},
               {"texture_error",
                {{"max_abs", max_err},
                 {"mean_abs", compared ? sum_err / (static_cast<double>(compared) * channels) : 0.0},
                 {"texels_compared", compared}}},
               {"texels_covered", covered},
               {"texels_observed", compared},
               {"texels_filled", fill.filled},
               {"empty_charts", fill.empty_charts}};
  write_atomic(dir / "metrics.json", metrics.dump(2) + "\n");

  json manifest = manifest_base("texsync", config_text, threads);
  manifest["seeds"] = {{"merge", rc.merge.seed}};
  manifest["outputs"] = outputs;
  manifest["timing_seconds"] = {{"load", t_load},
                                {"correspondence", t_correspondence},
                                {"merge", t_merging},
                                {"write", seconds_since(t_write)}};
  write_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
  log.info("texsync: final spread " + std::to_string(metrics["final_spread"].get<double>()) + ", max texture error " +
           std::to_string(max_err));
  return kOk;
}

// ---------------------------------------------------------------- render

struct RenderOptions {
  std::string mesh;
  std::string out;
  int views = 4;
  int resolution = 256;
  double fov_y_deg = 40.0;
  double radius = 3.0;
};

int cmd_render(const RenderOptions& opt, std::ostream& out, const Logger& log) {
  if (opt.views < 1) throw UsageError("render: --views must be at least 1");
  if (opt.resolution < 1) throw UsageError("render: --resolution must be positive");
  TriMesh mesh = load_input_mesh(opt.mesh, "mesh");
  apply_similarity(mesh, fit_unit_box(mesh));
  const fs::path dir(opt.out);
  make_output_dir(dir);
  for (int k = 0; k < opt.views; ++k) {
    const double az = 2.0 * 3.14159265358979323846 * k / opt.views;
    CameraView cam;
    cam.position = opt.radius * Vec3(std::sin(az), 0.0, std::cos(az));
    cam.fov_y_deg = opt.fov_y_deg;
    cam.width = cam.height = opt.resolution;
    const NormalRender render = render_normal_map(mesh, cam);
    write_png(dir / view_name(k), cam.width, cam.height, 4, normal_rgba(render));
    out << (dir / view_name(k)).string() << "\n";
  }
  log.info("render: wrote " + std::to_string(opt.views) + " views");
  return kOk;
}

// ---------------------------------------------------------------- validate

struct ValidateOptions {
  std::vector<std::string> meshes;
  std::string cylinders;
  std::string config;
};

bool validate_mesh_file(const std::string& path, std::ostream& out) {
  out << "mesh " << path << "\n";
  TriMesh mesh;
  try {
    mesh = load_mesh(path);
  } catch (const std::exception& e) {
    out << "  error: " << e.what() << "\n";
    return false;
  }
  out << "  vertices: " << mesh.num_vertices() << "\n  faces: " << mesh.num_faces() << "\n";
  if (mesh.empty()) {
    out << "  error: no faces\n";
    return false;
  }
  Vec3 lo = mesh.vertices.front();
  Vec3 hi = lo;
  for (const Vec3& v : mesh.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const auto boundary = boundary_vertices(mesh);
  out << "  bounds: [" << lo.x() << ", " << lo.y() << ", " << lo.z() << "] .. [" << hi.x() << ", " << hi.y() << ", "
      << hi.z() << "]\n";
  out << "  components: " << count_components(mesh) << "\n";
  out << "  boundary vertices: " << std::count(boundary.begin(), boundary.end(), true) << "\n";
  out << "  uvs: " << (mesh.has_uvs() ? "yes" : "no") << "\n";
  const auto degenerate = degenerate_faces(mesh);
  out << "  degenerate faces: " << degenerate.size() << "\n";
  try {
    validate_mesh(mesh);
  } catch (const std::exception& e) {
    out << "  error: " << e.what() << "\n";
    return false;
  }
  out << "  ok\n";
  return true;
}

bool validate_cylinders_file(const std::string& path, std::ostream& out) {
  out << "cylinders " << path << "\n";
  try {
    const auto cyl = load_cylinders(path);
    for (std::size_t i = 0; i < cyl.size(); ++i) {
      const auto& c = cyl[i];
      out << "  [" << i << "] " << (c.name.empty() ? "(unnamed)" : c.name) << " center (" << c.closed_end_center.x()
          << ", " << c.closed_end_center.y() << ", " << c.closed_end_center.z() << ") axis (" << c.axis.x() << ", "
          << c.axis.y() << ", " << c.axis.z() << ") radius " << c.radius << "\n";
    }
    out << "  ok (" << cyl.size() << " cylinders)\n";
    return true;
  } catch (const std::exception& e) {
    out << "  error: " << e.what() << "\n";
    return false;
  }
}

bool validate_config_file(const std::string& path, std::ostream& out) {
  out << "config " << path << "\n";
  try {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string kind = detect_config_kind(ss.str());
    if (kind == "deform") {
      const auto rc = load_deform_config(path);
      out << "  deform: " << rc.deform.iterations << " iterations, " << rc.deform.num_samples << " samples, guidance "
          << to_string(rc.deform.guidance.kind) << "\n";
    } else {
      const auto rc = load_texsync_config(path);
      out << "  texsync: " << rc.n_views << " views, texture " << rc.texture_size << ", denoiser "
          << to_string(rc.denoiser) << "\n";
    }
    out << "  ok\n";
    return true;
  } catch (const std::exception& e) {
    out << "  error: " << e.what() << "\n";
    return false;
  }
}

int cmd_validate(const ValidateOptions& opt, std::ostream& out) {
  if (opt.meshes.empty() && opt.cylinders.empty() && opt.config.empty()) {
    throw UsageError("validate: give at least one of --mesh, --cylinders, --config");
  }
  bool ok = true;
  for (const auto& m : opt.meshes) ok = validate_mesh_file(m, out) && ok;
  if (!opt.cylinders.empty()) ok = validate_cylinders_file(opt.cylinders, out) && ok;
  if (!opt.config.empty()) ok = validate_config_file(opt.config, out) && ok;
  return ok ? kOk : kUsage;
}

LogLevel log_level_from_env(std::ostream& err) {
  const char* env = std::getenv("GARMENTGEN_LOG");
  if (!env || !*env) return LogLevel::Info;
  const std::string s(env);
  if (s == "error") return LogLevel::Error;
  if (s == "warn") return LogLevel::Warn;
  if (s == "info") return LogLevel::Info;
  if (s == "debug") return LogLevel::Debug;
  err << "[warn] GARMENTGEN_LOG=" << s << " is not one of error, warn, info, debug; using info\n";
  return LogLevel::Info;
}

std::optional<int> threads_from_env() {
  const char* env = std::getenv("GARMENTGEN_THREADS");
  if (!env || !*env) return std::nullopt;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw UsageError(std::string("GARMENTGEN_THREADS must be a positive integer, got '") + env + "'");
  return static_cast<int>(n);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Garment deformation and multi-view texture synchronization", "garmentgen"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(version()));
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: GARMENTGEN_THREADS or all cores)")
      ->check(CLI::Range(1, 4096));

  RunOptions deform_opt;
  RunOptions texsync_opt;
  for (auto [name, opt, help] : {std::tuple{"deform", &deform_opt, "Deform a garment template onto a body"},
                                 std::tuple{"texsync", &texsync_opt, "Synchronize a texture across views"}}) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->fallthrough();
    sub->add_option("--config", opt->config, "Run configuration JSON (or a manifest)");
    sub->add_option("--out", opt->out, "Output directory");
    sub->add_option("--seed", opt->seed, "Override the configured seed");
    sub->add_flag("--print-config", opt->print_config, "Print the effective configuration and exit");
    if (std::string(name) == "deform") sub->add_option("--resume", opt->resume, "Continue from a checkpoint JSON");
  }

  RenderOptions render_opt;
  CLI::App* render = app.add_subcommand("render", "Write normal-map renders around the equator");
  render->fallthrough();
  render->add_option("--mesh", render_opt.mesh, "Mesh OBJ")->required();
  render->add_option("--out", render_opt.out, "Output directory")->required();
  render->add_option("--views", render_opt.views, "Number of views")->capture_default_str();
  render->add_option("--resolution", render_opt.resolution, "Image side in pixels")->capture_default_str();

  ValidateOptions validate_opt;
  CLI::App* validate = app.add_subcommand("validate", "Check mesh, cylinder and config files");
  validate->fallthrough();
  validate->add_option("--mesh", validate_opt.meshes, "Mesh OBJ (repeatable)");
  validate->add_option("--cylinders", validate_opt.cylinders, "Blocking cylinder JSON");
  validate->add_option("--config", validate_opt.config, "Run configuration JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  const Logger log(err, log_level_from_env(err));
  try {
    if (threads == 0) threads = threads_from_env().value_or(0);
    set_num_threads(threads);
    const int used_threads = max_threads();
    log.debug("threads: " + std::to_string(used_threads));
    const std::string command = app.get_subcommands().front()->get_name();
    if (command == "deform") return cmd_deform(deform_opt, used_threads, out, log);
    if (command == "texsync") return cmd_texsync(texsync_opt, used_threads, out, log);
    if (command == "render") return cmd_render(render_opt, out, log);
    return cmd_validate(validate_opt, out);
  } catch (const ConfigError& e) {
    log.error(std::string("config: ") + e.what());
    return kUsage;
  } catch (const UsageError& e) {
    log.error(e.what());
    return kUsage;
  } catch (const std::exception& e) {
    log.error(e.what());
    return kRuntime;
  }
}

}  // namespace garmentgen::cli
