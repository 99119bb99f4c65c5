#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "edgeseg/image.hpp"

namespace edgeseg {

/// Confusion counts over foreground pixels, accumulated across a dataset.
struct PixelCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  /// Adds pred/gt (same size, binary). `region`, if given, restricts the
  /// count to its foreground pixels.
  void add(const Mask& pred, const Mask& gt, const Mask* region = nullptr);
  PixelCounts& operator+=(const PixelCounts& o);
  std::uint64_t total() const { return tp + fp + fn + tn; }
};

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  double f_score = 0.0;
};

/// 100 * TP / (TP + FP + FN); 100 when prediction and truth are both empty.
double fg_iou(const PixelCounts& c);
/// F = 2PR / (P + R), 0 when P + R = 0; (1, 1, 1) when both are empty.
PrecisionRecall f_score(const PixelCounts& c);

double fg_iou(const Mask& pred, const Mask& gt);
PrecisionRecall f_score(const Mask& pred, const Mask& gt);

/// Foreground pixels with a background 4-neighbour inside the image.
Mask mask_boundary(const Mask& gt);
/// Pixels within Chebyshev distance `radius` of a boundary pixel.
Mask edge_band(const Mask& gt, int radius);

struct MetricReport {
  std::size_t images = 0;
  double fg_iou = 0.0;   // percent
  double f_score = 0.0;  // decimal
  double precision = 0.0;
  double recall = 0.0;
  int band_radius = 0;
  bool edge_band_empty = true;
  double edge_fg_iou = 0.0;
  double edge_f_score = 0.0;
  PixelCounts counts;
  PixelCounts edge_counts;

  /// key=value lines, one metric per line.
  std::string to_text() const;
  nlohmann::json to_json() const;
};

/// Band-restricted metrics for a single pair.
MetricReport edge_band_metrics(const Mask& pred, const Mask& gt, int band_radius);

/// Global (dataset-level) pixel accumulation of both plain and edge-band
/// metrics.
class MetricAccumulator {
 public:
  explicit MetricAccumulator(int band_radius = 2);
  void add(const Mask& pred, const Mask& gt);
  MetricReport report() const;

 private:
  int radius_;
  std::size_t images_ = 0;
  PixelCounts all_;
  PixelCounts band_;
  std::uint64_t band_pixels_ = 0;
};

}  // namespace edgeseg
