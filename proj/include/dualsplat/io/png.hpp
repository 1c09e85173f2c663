// Copyright 2026 The dualsplat Authors
// SPDX-License-Identifier: Apache-2.0

// PNG and PFM encoding for renders, occupancy maps and ID maps.

#ifndef DUALSPLAT_IO_PNG_HPP_
#define DUALSPLAT_IO_PNG_HPP_

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "dualsplat/image.hpp"

namespace dualsplat::io {

/// Decoded PNG samples: 8- or 16-bit, gray or RGB (alpha dropped).
struct PngPixels {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<std::uint16_t> samples;
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw std::runtime_error("cannot open " + path);
  return f;
}

[[noreturn]] inline void png_fail(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = msg;
  std::longjmp(png_jmpbuf(png), 1);
}

inline void png_warn(png_structp, png_const_charp) {}

}  // namespace detail

/// Writes samples (row-major, interleaved) as an 8- or 16-bit PNG.
inline void write_png(const std::string& path, const PngPixels& px) {
  if (px.channels != 1 && px.channels != 3) throw std::invalid_argument("write_png: channels must be 1 or 3");
  if (px.bit_depth != 8 && px.bit_depth != 16) throw std::invalid_argument("write_png: bit depth must be 8 or 16");
  if (px.samples.size() != static_cast<std::size_t>(px.width) * px.height * px.channels) {
    throw std::invalid_argument("write_png: sample count mismatch");
  }
  auto file = detail::open_file(path, "wb");
  std::string error;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, detail::png_fail, detail::png_warn);
  if (!png) throw std::runtime_error("write_png: libpng init failed");
  png_infop info = png_create_info_struct(png);
  const int bytes = px.bit_depth / 8;
  std::vector<png_byte> row(static_cast<std::size_t>(px.width) * px.channels * bytes);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("write_png: " + path + ": " + error);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, px.width, px.height, px.bit_depth,
               px.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t row_samples = static_cast<std::size_t>(px.width) * px.channels;
  for (int y = 0; y < px.height; ++y) {
    for (std::size_t k = 0; k < row_samples; ++k) {
      const std::uint16_t v = px.samples[y * row_samples + k];
      if (bytes == 1) {
        row[k] = static_cast<png_byte>(v);
      } else {
        row[2 * k] = static_cast<png_byte>(v >> 8);  // PNG is big-endian
        row[2 * k + 1] = static_cast<png_byte>(v & 0xff);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline PngPixels read_png(const std::string& path) {
  auto file = detail::open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw std::runtime_error("read_png: " + path + " is not a PNG file");
  }
  // Everything mutated after setjmp lives on the heap so a longjmp out of
  // libpng leaves no indeterminate locals behind.
  struct ReadState {
    std::string error;
    PngPixels px;
    std::vector<png_byte> row;
  };
  auto st = std::make_unique<ReadState>();
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &st->error, detail::png_fail, detail::png_warn);
  if (!png) throw std::runtime_error("read_png: libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_png: " + path + ": " + st->error);
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  PngPixels& px = st->px;
  px.width = static_cast<int>(png_get_image_width(png, info));
  px.height = static_cast<int>(png_get_image_height(png, info));
  px.channels = png_get_channels(png, info);
  px.bit_depth = png_get_bit_depth(png, info);
  if ((px.channels != 1 && px.channels != 3) || (px.bit_depth != 8 && px.bit_depth != 16)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_png: " + path + ": unsupported pixel layout");
  }
  st->row.resize(png_get_rowbytes(png, info));
  const std::size_t row_samples = static_cast<std::size_t>(px.width) * px.channels;
  px.samples.resize(row_samples * px.height);
  for (int y = 0; y < px.height; ++y) {
    png_read_row(png, st->row.data(), nullptr);
    const png_byte* row = st->row.data();
    for (std::size_t k = 0; k < row_samples; ++k) {
      px.samples[y * row_samples + k] =
          px.bit_depth == 8 ? row[k] : static_cast<std::uint16_t>((row[2 * k] << 8) | row[2 * k + 1]);
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return std::move(st->px);
}

inline std::uint16_t quantize8(double v) {
  return static_cast<std::uint16_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
}

/// RGB or gray image in [0,1] as 8-bit PNG.
inline void write_image(const std::string& path, const ImageBuffer& img) {
  PngPixels px{img.width, img.height, img.channels, 8, {}};
  px.samples.reserve(img.values.size());
  for (double v : img.values) px.samples.push_back(quantize8(v));
  write_png(path, px);
}

/// 8-bit PNG read as RGB (gray is replicated) with values in [0,1].
inline ImageBuffer read_rgb(const std::string& path) {
  const PngPixels px = read_png(path);
  const double scale = px.bit_depth == 16 ? 65535.0 : 255.0;
  ImageBuffer img(px.width, px.height, 3);
  for (std::size_t p = 0; p < static_cast<std::size_t>(px.width) * px.height; ++p) {
    for (int c = 0; c < 3; ++c) {
      img.values[3 * p + c] = px.samples[p * px.channels + (px.channels == 3 ? c : 0)] / scale;
    }
  }
  return img;
}

/// Occupancy map as 8-bit gray: round(255 * min(S, 1)).
inline void write_occupancy(const std::string& path, const ImageBuffer& occupancy) {
  if (occupancy.channels != 1) throw std::invalid_argument("write_occupancy: expected 1 channel");
  write_image(path, occupancy);
}

inline void write_id_map(const std::string& path, const IdMap& ids) {
  if (ids.channels != 1) throw std::invalid_argument("write_id_map: expected 1 channel");
  PngPixels px{ids.width, ids.height, 1, 16, {}};
  px.samples.reserve(ids.values.size());
  for (auto v : ids.values) {
    if (v < 0 || v > 65535) throw std::invalid_argument("write_id_map: id outside 16-bit range");
    px.samples.push_back(static_cast<std::uint16_t>(v));
  }
  write_png(path, px);
}

/// Single-channel 8- or 16-bit PNG of integer ids.
inline IdMap read_id_map(const std::string& path) {
  const PngPixels px = read_png(path);
  if (px.channels != 1) throw std::runtime_error("read_id_map: " + path + " is not single-channel");
  IdMap ids(px.width, px.height, 1);
  for (std::size_t k = 0; k < px.samples.size(); ++k) ids.values[k] = px.samples[k];
  return ids;
}

/// Distinct colors per label for viewing; 0 stays black.
inline ImageBuffer colorize_labels(const IdMap& ids) {
  ImageBuffer img(ids.width, ids.height, 3);
  for (std::size_t k = 0; k < ids.values.size(); ++k) {
    const auto id = static_cast<std::uint32_t>(ids.values[k]);
    if (id == 0) continue;
    const std::uint32_t h = id * 2654435761u;
    img.values[3 * k] = 0.25 + 0.75 * ((h >> 8) & 0xff) / 255.0;
    img.values[3 * k + 1] = 0.25 + 0.75 * ((h >> 16) & 0xff) / 255.0;
    img.values[3 * k + 2] = 0.25 + 0.75 * ((h >> 24) & 0xff) / 255.0;
  }
  return img;
}

/// Raw float dump as a little-endian PFM (bottom-to-top rows, per format).
inline void write_pfm(const std::string& path, const ImageBuffer& img) {
  if (img.channels != 1 && img.channels != 3) throw std::invalid_argument("write_pfm: channels must be 1 or 3");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << (img.channels == 3 ? "PF" : "Pf") << "\n" << img.width << " " << img.height << "\n-1.0\n";
  for (int y = img.height - 1; y >= 0; --y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        const float v = static_cast<float>(img.at(x, y, c));
        unsigned char b[4];
        std::memcpy(b, &v, 4);
        if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + 4);
        out.write(reinterpret_cast<const char*>(b), 4);
      }
    }
  }
  if (!out) throw std::runtime_error("write_pfm: failed writing " + path);
}

inline ImageBuffer read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  in.get();
  if ((magic != "PF" && magic != "Pf") || w < 1 || h < 1 || scale == 0.0) {
    throw std::runtime_error("read_pfm: " + path + " has a malformed header");
  }
  const int c = magic == "PF" ? 3 : 1;
  const bool little = scale < 0.0;
  ImageBuffer img(w, h, c);
  for (int y = h - 1; y >= 0; --y) {
    for (int x = 0; x < w; ++x) {
      for (int k = 0; k < c; ++k) {
        unsigned char b[4];
        if (!in.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("read_pfm: " + path + " is truncated");
        if (little != (std::endian::native == std::endian::little)) std::reverse(b, b + 4);
        float v;
        std::memcpy(&v, b, 4);
        img.at(x, y, k) = v;
      }
    }
  }
  return img;
}

}  // namespace dualsplat::io

#endif  // DUALSPLAT_IO_PNG_HPP_
