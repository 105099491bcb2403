#include "garmentgen/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <string>

namespace garmentgen {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// libpng reports errors by longjmp; the message is parked here first.
struct ErrorSink {
  std::string message;
};

void png_fail(png_structp png, png_const_charp msg) {
  if (auto* sink = static_cast<ErrorSink*>(png_get_error_ptr(png))) sink->message = msg;
  png_longjmp(png, 1);
}
void png_warn(png_structp, png_const_charp) {}

int color_type(int channels) {
  switch (channels) {
    case 1: return PNG_COLOR_TYPE_GRAY;
    case 2: return PNG_COLOR_TYPE_GRAY_ALPHA;
    case 3: return PNG_COLOR_TYPE_RGB;
    case 4: return PNG_COLOR_TYPE_RGBA;
    default: throw std::invalid_argument("PNG channel count must be 1..4");
  }
}

// Kept free of objects with destructors so the longjmp target is safe.
bool encode_rows(std::FILE* file, png_uint_32 width, png_uint_32 height, int bit_depth, int ctype,
                 png_bytep* rows, ErrorSink* sink) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, sink, png_fail, png_warn);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, file);
  png_set_IHDR(png, info, width, height, bit_depth, ctype, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

struct DecodedHeader {
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::size_t rowbytes = 0;
};

bool decode_header(png_structp png, png_infop info, std::FILE* file, DecodedHeader* out) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, file);
  png_read_info(png, info);
  png_set_expand(png);
  png_read_update_info(png, info);
  out->width = png_get_image_width(png, info);
  out->height = png_get_image_height(png, info);
  out->channels = png_get_channels(png, info);
  out->bit_depth = png_get_bit_depth(png, info);
  out->rowbytes = png_get_rowbytes(png, info);
  return true;
}

bool decode_rows(png_structp png, png_bytep* rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_read_image(png, rows);
  png_read_end(png, nullptr);
  return true;
}

}  // namespace

void write_png(const std::filesystem::path& path, int width, int height, int channels,
               std::span<const double> samples, int bit_depth) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("PNG size must be positive");
  if (bit_depth != 8 && bit_depth != 16) throw std::invalid_argument("PNG bit depth must be 8 or 16");
  const int ctype = color_type(channels);
  const std::size_t row_samples = static_cast<std::size_t>(width) * static_cast<std::size_t>(channels);
  if (samples.size() != row_samples * static_cast<std::size_t>(height)) {
    throw std::invalid_argument("PNG sample count does not match its dimensions");
  }

  const std::size_t bytes = static_cast<std::size_t>(bit_depth / 8);
  const double scale = bit_depth == 8 ? 255.0 : 65535.0;
  std::vector<png_byte> buffer(row_samples * bytes * static_cast<std::size_t>(height));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double v = std::isfinite(samples[i]) ? std::clamp(samples[i], 0.0, 1.0) : 0.0;
    const auto q = static_cast<unsigned>(std::lround(v * scale));
    if (bytes == 1) {
      buffer[i] = static_cast<png_byte>(q);
    } else {
      buffer[2 * i] = static_cast<png_byte>(q >> 8);  // PNG is big-endian
      buffer[2 * i + 1] = static_cast<png_byte>(q & 0xff);
    }
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + static_cast<std::size_t>(y) * row_samples * bytes;

  FilePtr file(std::fopen(path.string().c_str(), "wb"));
  if (!file) throw std::runtime_error("cannot open " + path.string() + " for writing");
  ErrorSink sink;
  if (!encode_rows(file.get(), static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth, ctype,
                   rows.data(), &sink)) {
    throw std::runtime_error("writing " + path.string() + " failed: " + sink.message);
  }
  if (std::fflush(file.get()) != 0) throw std::runtime_error("writing " + path.string() + " failed");
}

PngImage read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.string().c_str(), "rb"));
  if (!file) throw std::runtime_error("cannot open " + path.string());
  ErrorSink sink;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &sink, png_fail, png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("libpng initialization failed");
  }
  DecodedHeader header;
  if (!decode_header(png, info, file.get(), &header)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("reading " + path.string() + " failed: " + sink.message);
  }
  std::vector<png_byte> buffer(header.rowbytes * header.height);
  std::vector<png_bytep> rows(header.height);
  for (png_uint_32 y = 0; y < header.height; ++y) rows[y] = buffer.data() + y * header.rowbytes;
  const bool ok = decode_rows(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  if (!ok) throw std::runtime_error("reading " + path.string() + " failed: " + sink.message);

  PngImage img;
  img.width = static_cast<int>(header.width);
  img.height = static_cast<int>(header.height);
  img.channels = header.channels;
  img.bit_depth = header.bit_depth;
  if (img.bit_depth == 16) {
    img.samples.resize(buffer.size() / 2);
    for (std::size_t i = 0; i < img.samples.size(); ++i) {
      img.samples[i] = ((static_cast<unsigned>(buffer[2 * i]) << 8) | buffer[2 * i + 1]) / 65535.0;
    }
  } else {
    img.samples.resize(buffer.size());
    for (std::size_t i = 0; i < buffer.size(); ++i) img.samples[i] = buffer[i] / 255.0;
  }
  return img;
}

}  // namespace garmentgen
