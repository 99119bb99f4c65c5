#pragma once

#include <filesystem>

#include "edgeseg/image.hpp"

namespace edgeseg {

/// Reads an 8-bit gray or RGB PNG (alpha is composited over black).
/// 16-bit files and unreadable paths raise IoError naming the path.
ImageU8 load_png(const std::filesystem::path& path);
void save_png(const std::filesystem::path& path, const ImageU8& img);

/// Masks are stored as gray PNG with 0 = background, 255 = foreground.
void save_mask(const std::filesystem::path& path, const Mask& mask);
/// Any nonzero pixel reads back as foreground.
Mask load_mask(const std::filesystem::path& path);

/// Fractional maps are quantised to round(v * 255).
void save_map(const std::filesystem::path& path, const EdgeMap& map);

}  // namespace edgeseg
