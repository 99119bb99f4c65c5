#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace edgeseg {

/// 8-bit raster, row-major, channels interleaved (1 = gray, 3 = RGB).
struct ImageU8 {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<std::uint8_t> data;

  ImageU8() = default;
  ImageU8(int h, int w, int c, std::uint8_t fill = 0);

  std::uint8_t& at(int y, int x, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int y, int x, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool operator==(const ImageU8&) const = default;
};

/// Single-channel map with values in [0, 1].
struct EdgeMap {
  int height = 0;
  int width = 0;
  std::vector<float> values;

  EdgeMap() = default;
  EdgeMap(int h, int w, float fill = 0.0f)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

  float& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const EdgeMap&) const = default;
};

/// Binary mask; data holds 0 (background) or 1 (foreground).
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;
  bool is_binary() const;
  bool operator==(const Mask&) const = default;
};

/// round(0.299 R + 0.587 G + 0.114 B) in exact integer arithmetic.
/// Single-channel input passes through unchanged.
ImageU8 rgb_to_luma(const ImageU8& img);

ImageU8 flip_horizontal(const ImageU8& img);
Mask flip_horizontal(const Mask& mask);
ImageU8 crop(const ImageU8& img, int top, int left, int height, int width);
Mask crop(const Mask& mask, int top, int left, int height, int width);

/// Nearest-neighbour resampling sampling source pixel floor((i + 0.5) * in / out).
Mask resize_nearest(const Mask& mask, int height, int width);

}  // namespace edgeseg
