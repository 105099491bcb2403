#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "garmentgen/optimize.hpp"
#include "garmentgen/texsync.hpp"

namespace garmentgen {

/// Bad or inconsistent configuration; the message names the field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DeformRunConfig {
  std::filesystem::path template_mesh;
  std::filesystem::path body_mesh;
  std::optional<std::filesystem::path> cylinders;
  std::optional<std::filesystem::path> target_mesh;
  DeformConfig deform;
};

enum class DenoiserKind { ConstantTarget, Biased, Noisy };
std::string to_string(DenoiserKind kind);

struct TexsyncRunConfig {
  std::filesystem::path mesh;
  int texture_size = 1024;
  int n_views = 6;
  double view_radius = 3.0;
  int view_resolution = 512;
  double fov_y_deg = 40.0;
  double depth_tolerance = 1e-3;
  double weight_exponent = 1.0;
  bool reweight = true;
  MergeOptions merge;
  DenoiserKind denoiser = DenoiserKind::ConstantTarget;
  /// Empty: color each texel by its normalized 3D position.
  std::optional<std::filesystem::path> target_texture;
  std::vector<double> biases;
  double noise_sigma = 0.1;
  bool fill_voids = true;
  int bit_depth = 8;
  bool dump_correspondence = false;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Relative paths resolve against `base_dir`. Unknown keys are errors. A run
/// manifest is accepted in place of a config; its embedded config is used.
DeformRunConfig parse_deform_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
TexsyncRunConfig parse_texsync_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
DeformRunConfig load_deform_config(const std::filesystem::path& path);
TexsyncRunConfig load_texsync_config(const std::filesystem::path& path);

/// Complete JSON documents with every field, parseable by the functions
/// above.
std::string format_config(const DeformRunConfig& config);
std::string format_config(const TexsyncRunConfig& config);

/// "deform" or "texsync", from an explicit "command" key or the keys present.
std::string detect_config_kind(std::string_view json_text);

/// 64-bit FNV-1a as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace garmentgen
