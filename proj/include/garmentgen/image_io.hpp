#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace garmentgen {

/// Samples are interleaved, rows top to bottom, nominally in [0, 1]; values
/// outside are clamped. `channels` is 1..4 (gray, gray+alpha, RGB, RGBA) and
/// `bit_depth` 8 or 16.
void write_png(const std::filesystem::path& path, int width, int height, int channels,
               std::span<const double> samples, int bit_depth = 8);

struct PngImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  /// Normalized to [0, 1].
  std::vector<double> samples;
};

PngImage read_png(const std::filesystem::path& path);

}  // namespace garmentgen
