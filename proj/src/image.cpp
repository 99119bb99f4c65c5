#include "edgeseg/image.hpp"

#include <algorithm>
#include <string>

#include "edgeseg/errors.hpp"

namespace edgeseg {

ImageU8::ImageU8(int h, int w, int c, std::uint8_t fill)
    : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {
  if (h <= 0 || w <= 0) throw ConfigError("image extents must be positive");
  if (c != 1 && c != 3) throw ConfigError("image must have 1 or 3 channels, got " + std::to_string(c));
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](auto v) { return v != 0; }));
}

bool Mask::is_binary() const {
  return std::all_of(data.begin(), data.end(), [](auto v) { return v <= 1; });
}

ImageU8 rgb_to_luma(const ImageU8& img) {
  if (img.channels == 1) return img;
  ImageU8 out(img.height, img.width, 1);
  for (std::size_t i = 0, n = out.data.size(); i < n; ++i) {
    const unsigned r = img.data[3 * i], g = img.data[3 * i + 1], b = img.data[3 * i + 2];
    const unsigned luma = (299 * r + 587 * g + 114 * b + 500) / 1000;
    out.data[i] = static_cast<std::uint8_t>(std::min(luma, 255u));
  }
  return out;
}

ImageU8 flip_horizontal(const ImageU8& img) {
  ImageU8 out = img;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
    }
  }
  return out;
}

Mask flip_horizontal(const Mask& mask) {
  Mask out = mask;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) out.at(y, x) = mask.at(y, mask.width - 1 - x);
  }
  return out;
}

namespace {
void check_crop(int src_h, int src_w, int top, int left, int height, int width) {
  if (top < 0 || left < 0 || height <= 0 || width <= 0 || top + height > src_h || left + width > src_w) {
    throw ConfigError("crop window outside the " + std::to_string(src_h) + "x" + std::to_string(src_w) + " image");
  }
}
}  // namespace

ImageU8 crop(const ImageU8& img, int top, int left, int height, int width) {
  check_crop(img.height, img.width, top, left, height, width);
  ImageU8 out(height, width, img.channels);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(top + y, left + x, c);
    }
  }
  return out;
}

Mask crop(const Mask& mask, int top, int left, int height, int width) {
  check_crop(mask.height, mask.width, top, left, height, width);
  Mask out(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) out.at(y, x) = mask.at(top + y, left + x);
  }
  return out;
}

Mask resize_nearest(const Mask& mask, int height, int width) {
  Mask out(height, width);
  for (int y = 0; y < height; ++y) {
    const int sy = static_cast<int>((static_cast<long long>(2 * y + 1) * mask.height) / (2LL * height));
    for (int x = 0; x < width; ++x) {
      const int sx = static_cast<int>((static_cast<long long>(2 * x + 1) * mask.width) / (2LL * width));
      out.at(y, x) = mask.at(sy, sx);
    }
  }
  return out;
}

}  // namespace edgeseg
