#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "edgeseg/config.hpp"
#include "edgeseg/image.hpp"
#include "edgeseg/loss.hpp"

namespace edgeseg {

/// One glyph stroke. Coverage is decided at pixel centres (x + 0.5, y + 0.5).
struct Stroke {
  enum class Kind { Bar, Segment, Arc };
  Kind kind = Kind::Bar;
  // Bar: half-open pixel rectangle [x0, x1) x [y0, y1).
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  // Segment: endpoints; Arc: centre in (ax, ay), radius, start angle and
  // counter-clockwise span in radians.
  double ax = 0, ay = 0, bx = 0, by = 0;
  double radius = 0, start = 0, span = 0;
  double width = 1;
  std::uint8_t color[3] = {0, 0, 0};

  bool covers(double px, double py) const;
  /// Inclusive pixel bounding box that contains every covered pixel.
  void bounds(int& left, int& top, int& right, int& bottom) const;
};

struct Sample {
  ImageU8 image;
  MaskPair masks;
  std::uint64_t seed = 0;
  int glyph_count = 0;
  std::vector<Stroke> strokes;  // in paint order
};

/// Deterministic: the same (cfg, index) always renders identical bytes.
Sample synth_sample(const SynthConfig& cfg, std::uint64_t index);
std::uint64_t sample_seed(const SynthConfig& cfg, std::uint64_t index);

/// images/NNNNNN.png, masks/NNNNNN.png, boxes/NNNNNN.png and manifest.txt
/// ("index seed glyph_count" per line).
void save_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples);
std::vector<Sample> generate_dataset(const SynthConfig& cfg, std::size_t count, std::uint64_t first_index = 0);
std::vector<Sample> load_dataset(const std::filesystem::path& dir);

}  // namespace edgeseg
