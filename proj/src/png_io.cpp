#include "edgeseg/png_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <png.h>

#include "edgeseg/errors.hpp"

namespace edgeseg {

ImageU8 load_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + image.message);
  }
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&image);
    throw IoError("unsupported PNG bit depth (16-bit) in " + path.string());
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  ImageU8 out(static_cast<int>(image.height), static_cast<int>(image.width), color ? 3 : 1);
  png_color background{0, 0, 0};
  if (!png_image_finish_read(&image, &background, out.data.data(), 0, nullptr)) {
    const std::string message = image.message;
    png_image_free(&image);
    throw IoError("cannot decode PNG " + path.string() + ": " + message);
  }
  return out;
}

void save_png(const std::filesystem::path& path, const ImageU8& img) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.data.data(), 0, nullptr)) {
    const std::string message = image.message;
    png_image_free(&image);
    throw IoError("cannot write PNG " + path.string() + ": " + message);
  }
}

void save_mask(const std::filesystem::path& path, const Mask& mask) {
  ImageU8 img(mask.height, mask.width, 1);
  std::transform(mask.data.begin(), mask.data.end(), img.data.begin(),
                 [](std::uint8_t v) { return static_cast<std::uint8_t>(v ? 255 : 0); });
  save_png(path, img);
}

Mask load_mask(const std::filesystem::path& path) {
  const ImageU8 img = rgb_to_luma(load_png(path));
  Mask mask(img.height, img.width);
  std::transform(img.data.begin(), img.data.end(), mask.data.begin(),
                 [](std::uint8_t v) { return static_cast<std::uint8_t>(v ? 1 : 0); });
  return mask;
}

void save_map(const std::filesystem::path& path, const EdgeMap& map) {
  ImageU8 img(map.height, map.width, 1);
  std::transform(map.values.begin(), map.values.end(), img.data.begin(), [](float v) {
    const double q = std::round(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0);
    return static_cast<std::uint8_t>(q);
  });
  save_png(path, img);
}

}  // namespace edgeseg
