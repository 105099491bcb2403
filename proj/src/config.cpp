#include "garmentgen/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace garmentgen {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Reads the keys of one JSON object, recording which were used so leftovers
// can be reported.
class Fields {
 public:
  Fields(const json& obj, std::string prefix) : obj_(obj), prefix_(std::move(prefix)) {
    if (!obj_.is_object()) throw ConfigError(where("") + "expected an object");
  }

  std::string name(const std::string& key) const { return prefix_ + key; }

  bool has(const std::string& key) const { return obj_.contains(key) && !obj_.at(key).is_null(); }

  const json* find(const std::string& key) {
    seen_.insert(key);
    return has(key) ? &obj_.at(key) : nullptr;
  }

  void number(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(name(key) + ": expected a number");
      out = v->get<double>();
    }
  }

  template <typename Int>
  void integer(const std::string& key, Int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer() && !(v->is_number() && v->get<double>() == std::floor(v->get<double>()))) {
        throw ConfigError(name(key) + ": expected an integer");
      }
      if (std::is_unsigned_v<Int> && v->is_number_integer() && !v->is_number_unsigned() && v->get<std::int64_t>() < 0) {
        throw ConfigError(name(key) + ": must be non-negative");
      }
      out = v->get<Int>();
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(name(key) + ": expected true or false");
      out = v->get<bool>();
    }
  }

  void string(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(name(key) + ": expected a string");
      out = v->get<std::string>();
    }
  }

  void path(const std::string& key, fs::path& out, const fs::path& base) {
    std::string s;
    string(key, s);
    if (!s.empty()) out = resolve(s, base);
  }

  void optional_path(const std::string& key, std::optional<fs::path>& out, const fs::path& base) {
    std::string s;
    string(key, s);
    if (!s.empty()) out = resolve(s, base);
  }

  Fields object(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Fields(has(key) ? obj_.at(key) : empty, prefix_ + key + ".");
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown key '" + prefix_ + key + "'");
    }
  }

 private:
  static fs::path resolve(const std::string& s, const fs::path& base) {
    fs::path p(s);
    return p.is_absolute() || base.empty() ? p : base / p;
  }
  std::string where(const std::string& key) const {
    const std::string n = prefix_.empty() ? "config" : prefix_.substr(0, prefix_.size() - 1);
    return (key.empty() ? n : n + "." + key) + ": ";
  }

  const json& obj_;
  std::string prefix_;
  std::set<std::string> seen_;
};

json parse_document(std::string_view text) {
  try {
    json doc = json::parse(text.begin(), text.end());
    if (doc.is_object() && doc.value("format", "") == "garmentgen-manifest") {
      if (!doc.contains("config")) throw ConfigError("manifest has no 'config' entry");
      return doc.at("config");
    }
    return doc;
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void require_file(const fs::path& p, const std::string& field) {
  if (p.empty()) throw ConfigError(field + ": required");
  if (!fs::is_regular_file(p)) throw ConfigError(field + ": file not found: " + p.string());
}

void check_command(Fields& f, const std::string& expected) {
  std::string command = expected;
  f.string("command", command);
  if (command != expected) throw ConfigError("command: expected '" + expected + "', got '" + command + "'");
}

template <typename Fn>
auto rethrow_invalid(Fn&& fn) {
  try {
    return fn();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

std::string to_string(DenoiserKind kind) {
  switch (kind) {
    case DenoiserKind::ConstantTarget: return "constant_target";
    case DenoiserKind::Biased: return "biased";
    case DenoiserKind::Noisy: return "noisy";
  }
  return "constant_target";
}

DeformRunConfig parse_deform_config(std::string_view text, const fs::path& base) {
  const json doc = parse_document(text);
  DeformRunConfig rc;
  DeformConfig& d = rc.deform;
  Fields f(doc, "");
  check_command(f, "deform");
  f.path("template", rc.template_mesh, base);
  f.path("body", rc.body_mesh, base);
  f.optional_path("cylinders", rc.cylinders, base);
  f.optional_path("target", rc.target_mesh, base);
  f.integer("iterations", d.iterations);
  f.number("learning_rate", d.learning_rate);
  f.integer("batch_size", d.batch_size);
  f.integer("num_samples", d.num_samples);
  f.integer("seed", d.seed);
  f.boolean("enable_symmetry", d.enable_symmetry);
  f.boolean("normalize", d.normalize);
  f.integer("checkpoint_every", d.checkpoint_every);

  Fields w = f.object("weights");
  w.number("lambda_coll", d.weights.collision);
  w.number("lambda_blk", d.weights.blocking);
  w.number("lambda_sym", d.weights.symmetry);
  w.number("lambda_lap", d.weights.laplacian);
  w.number("lambda_nc", d.weights.normal_consistency);
  w.number("epsilon", d.weights.epsilon);
  w.finish();

  Fields s = f.object("schedule");
  s.integer("warmup_iterations", d.schedule.warmup_iterations);
  s.integer("early_min", d.schedule.early_min);
  s.integer("late_min", d.schedule.late_min);
  s.integer("max", d.schedule.max);
  s.finish();

  Fields g = f.object("guidance");
  std::string kind = to_string(d.guidance.kind);
  g.string("kind", kind);
  d.guidance.kind = rethrow_invalid([&] { return parse_guidance_kind(kind); });
  g.number("weight", d.guidance.weight);
  g.integer("interval", d.guidance.interval);
  g.integer("inversion_steps", d.guidance.inversion_steps);
  g.integer("interval_steps", d.guidance.interval_steps);
  g.integer("latent_factor", d.guidance.latent_factor);
  g.integer("shape_samples", d.guidance.shape_samples);
  Fields c = g.object("cameras");
  c.number("radius", d.guidance.cameras.radius);
  c.number("fov_y_deg", d.guidance.cameras.fov_y_deg);
  c.number("elevation_min_deg", d.guidance.cameras.elevation_min_deg);
  c.number("elevation_max_deg", d.guidance.cameras.elevation_max_deg);
  c.integer("resolution", d.guidance.cameras.resolution);
  c.finish();
  g.finish();
  f.finish();

  try {
    d.validate();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    throw ConfigError(msg.rfind("lambda_", 0) == 0 || msg.rfind("epsilon", 0) == 0 ? "weights." + msg : msg);
  }
  require_file(rc.template_mesh, "template");
  require_file(rc.body_mesh, "body");
  if (rc.cylinders) require_file(*rc.cylinders, "cylinders");
  if (rc.target_mesh) require_file(*rc.target_mesh, "target");
  if (d.guidance.kind != GuidanceKind::None && !rc.target_mesh) {
    throw ConfigError("target: required by guidance.kind " + to_string(d.guidance.kind));
  }
  return rc;
}

void TexsyncRunConfig::validate() const {
  if (texture_size < 1) throw ConfigError("texture_size: must be positive");
  if (n_views < 2) throw ConfigError("views.count: must be at least 2");
  if (!(view_radius > 0.0)) throw ConfigError("views.radius: must be positive");
  if (view_resolution < 1) throw ConfigError("views.resolution: must be positive");
  if (!(fov_y_deg > 0.0 && fov_y_deg < 180.0)) throw ConfigError("views.fov_y_deg: must be in (0, 180)");
  if (!(depth_tolerance >= 0.0)) throw ConfigError("depth_tolerance: must be non-negative");
  if (!(weight_exponent > 0.0)) throw ConfigError("weight_exponent: must be positive");
  if (merge.steps < 1) throw ConfigError("merge.steps: must be at least 1");
  if (merge.channels < 1) throw ConfigError("merge.channels: must be at least 1");
  if (denoiser == DenoiserKind::Biased && static_cast<int>(biases.size()) != n_views) {
    throw ConfigError("denoiser.biases: need one value per view (" + std::to_string(n_views) + ")");
  }
  if (!(noise_sigma >= 0.0)) throw ConfigError("denoiser.sigma: must be non-negative");
  if (bit_depth != 8 && bit_depth != 16) throw ConfigError("bit_depth: must be 8 or 16");
}

TexsyncRunConfig parse_texsync_config(std::string_view text, const fs::path& base) {
  const json doc = parse_document(text);
  TexsyncRunConfig rc;
  Fields f(doc, "");
  check_command(f, "texsync");
  f.path("mesh", rc.mesh, base);
  f.integer("texture_size", rc.texture_size);
  f.number("depth_tolerance", rc.depth_tolerance);
  f.number("weight_exponent", rc.weight_exponent);
  f.boolean("reweight", rc.reweight);
  f.boolean("fill_voids", rc.fill_voids);
  f.integer("bit_depth", rc.bit_depth);
  f.boolean("dump_correspondence", rc.dump_correspondence);

  Fields v = f.object("views");
  v.integer("count", rc.n_views);
  v.number("radius", rc.view_radius);
  v.integer("resolution", rc.view_resolution);
  v.number("fov_y_deg", rc.fov_y_deg);
  v.finish();

  Fields m = f.object("merge");
  m.integer("steps", rc.merge.steps);
  m.integer("channels", rc.merge.channels);
  m.integer("seed", rc.merge.seed);
  m.finish();

  Fields d = f.object("denoiser");
  std::string kind = to_string(rc.denoiser);
  d.string("kind", kind);
  if (kind == "constant_target") rc.denoiser = DenoiserKind::ConstantTarget;
  else if (kind == "biased") rc.denoiser = DenoiserKind::Biased;
  else if (kind == "noisy") rc.denoiser = DenoiserKind::Noisy;
  else throw ConfigError("denoiser.kind: unknown value '" + kind + "' (expected constant_target, biased or noisy)");
  d.optional_path("target_texture", rc.target_texture, base);
  if (const json* b = d.find("biases")) {
    if (!b->is_array()) throw ConfigError("denoiser.biases: expected an array of numbers");
    for (const json& x : *b) {
      if (!x.is_number()) throw ConfigError("denoiser.biases: expected an array of numbers");
      rc.biases.push_back(x.get<double>());
    }
  }
  d.number("sigma", rc.noise_sigma);
  d.finish();
  f.finish();

  rc.validate();
  require_file(rc.mesh, "mesh");
  if (rc.target_texture) require_file(*rc.target_texture, "denoiser.target_texture");
  return rc;
}

DeformRunConfig load_deform_config(const fs::path& path) {
  return parse_deform_config(read_text(path), path.parent_path());
}

TexsyncRunConfig load_texsync_config(const fs::path& path) {
  return parse_texsync_config(read_text(path), path.parent_path());
}

std::string format_config(const DeformRunConfig& rc) {
  const DeformConfig& d = rc.deform;
  auto opt = [](const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); };
  json doc = {
      {"command", "deform"},
      {"template", rc.template_mesh.string()},
      {"body", rc.body_mesh.string()},
      {"cylinders", opt(rc.cylinders)},
      {"target", opt(rc.target_mesh)},
      {"iterations", d.iterations},
      {"learning_rate", d.learning_rate},
      {"batch_size", d.batch_size},
      {"num_samples", d.num_samples},
      {"seed", d.seed},
      {"enable_symmetry", d.enable_symmetry},
      {"normalize", d.normalize},
      {"checkpoint_every", d.checkpoint_every},
      {"weights",
       {{"lambda_coll", d.weights.collision},
        {"lambda_blk", d.weights.blocking},
        {"lambda_sym", d.weights.symmetry},
        {"lambda_lap", d.weights.laplacian},
        {"lambda_nc", d.weights.normal_consistency},
        {"epsilon", d.weights.epsilon}}},
      {"schedule",
       {{"warmup_iterations", d.schedule.warmup_iterations},
        {"early_min", d.schedule.early_min},
        {"late_min", d.schedule.late_min},
        {"max", d.schedule.max}}},
      {"guidance",
       {{"kind", to_string(d.guidance.kind)},
        {"weight", d.guidance.weight},
        {"interval", d.guidance.interval},
        {"inversion_steps", d.guidance.inversion_steps},
        {"interval_steps", d.guidance.interval_steps},
        {"latent_factor", d.guidance.latent_factor},
        {"shape_samples", d.guidance.shape_samples},
        {"cameras",
         {{"radius", d.guidance.cameras.radius},
          {"fov_y_deg", d.guidance.cameras.fov_y_deg},
          {"elevation_min_deg", d.guidance.cameras.elevation_min_deg},
          {"elevation_max_deg", d.guidance.cameras.elevation_max_deg},
          {"resolution", d.guidance.cameras.resolution}}}}},
  };
  return doc.dump(2);
}

std::string format_config(const TexsyncRunConfig& rc) {
  json doc = {
      {"command", "texsync"},
      {"mesh", rc.mesh.string()},
      {"texture_size", rc.texture_size},
      {"views",
       {{"count", rc.n_views}, {"radius", rc.view_radius}, {"resolution", rc.view_resolution}, {"fov_y_deg", rc.fov_y_deg}}},
      {"depth_tolerance", rc.depth_tolerance},
      {"weight_exponent", rc.weight_exponent},
      {"reweight", rc.reweight},
      {"merge", {{"steps", rc.merge.steps}, {"channels", rc.merge.channels}, {"seed", rc.merge.seed}}},
      {"denoiser",
       {{"kind", to_string(rc.denoiser)},
        {"target_texture", rc.target_texture ? json(rc.target_texture->string()) : json(nullptr)},
        {"biases", rc.biases},
        {"sigma", rc.noise_sigma}}},
      {"fill_voids", rc.fill_voids},
      {"bit_depth", rc.bit_depth},
      {"dump_correspondence", rc.dump_correspondence},
  };
  return doc.dump(2);
}

std::string detect_config_kind(std::string_view text) {
  const json doc = parse_document(text);
  if (!doc.is_object()) throw ConfigError("config: expected an object");
  if (doc.contains("command")) {
    const std::string c = doc.at("command").is_string() ? doc.at("command").get<std::string>() : "";
    if (c == "deform" || c == "texsync") return c;
    throw ConfigError("command: expected 'deform' or 'texsync'");
  }
  if (doc.contains("template") || doc.contains("body")) return "deform";
  if (doc.contains("mesh")) return "texsync";
  throw ConfigError("config: cannot tell whether this is a deform or texsync config");
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace garmentgen
