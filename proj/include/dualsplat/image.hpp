// Copyright 2026 The dualsplat Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef DUALSPLAT_IMAGE_HPP_
#define DUALSPLAT_IMAGE_HPP_

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dualsplat {

/// Row-major interleaved image. Real-valued buffers hold colors and
/// occupancies in [0,1]; integer buffers hold ID maps and label maps.
template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<T> values;

  Image() = default;
  Image(int w, int h, int c, T fill = T{})
      : width(w), height(h), channels(c),
        values(static_cast<std::size_t>(w) * h * c, fill) {
    if (w < 0 || h < 0 || (c != 1 && c != 3)) {
      throw std::invalid_argument("image: bad dimensions " + std::to_string(w) +
                                  "x" + std::to_string(h) + "x" + std::to_string(c));
    }
  }

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  T& at(int x, int y, int c = 0) { return values[index(x, y, c)]; }
  const T& at(int x, int y, int c = 0) const { return values[index(x, y, c)]; }

  bool same_shape(const Image& other) const {
    return width == other.width && height == other.height && channels == other.channels;
  }
  bool empty() const { return values.empty(); }

  friend bool operator==(const Image&, const Image&) = default;
};

using ImageBuffer = Image<double>;
using IdMap = Image<std::int32_t>;
using BinaryMask = Image<std::uint8_t>;

template <typename A, typename B>
void require_same_size(const Image<A>& a, const Image<B>& b, const char* what) {
  if (a.width != b.width || a.height != b.height) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch (" +
                                std::to_string(a.width) + "x" + std::to_string(a.height) +
                                " vs " + std::to_string(b.width) + "x" +
                                std::to_string(b.height) + ")");
  }
}

template <typename A, typename B>
void require_same_shape(const Image<A>& a, const Image<B>& b, const char* what) {
  require_same_size(a, b, what);
  if (a.channels != b.channels) {
    throw std::invalid_argument(std::string(what) + ": channel mismatch");
  }
}

}  // namespace dualsplat

#endif  // DUALSPLAT_IMAGE_HPP_
