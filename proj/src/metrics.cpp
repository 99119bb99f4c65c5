#include "edgeseg/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "edgeseg/errors.hpp"

namespace edgeseg {

void PixelCounts::add(const Mask& pred, const Mask& gt, const Mask* region) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw ShapeError("prediction " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                     " vs ground truth " + std::to_string(gt.height) + "x" + std::to_string(gt.width));
  }
  if (region && (region->height != gt.height || region->width != gt.width)) throw ShapeError("region size mismatch");
  for (std::size_t i = 0; i < gt.data.size(); ++i) {
    if (region && !region->data[i]) continue;
    const bool p = pred.data[i] != 0, g = gt.data[i] != 0;
    if (p && g) ++tp;
    else if (p) ++fp;
    else if (g) ++fn;
    else ++tn;
  }
}

PixelCounts& PixelCounts::operator+=(const PixelCounts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

double fg_iou(const PixelCounts& c) {
  const std::uint64_t uni = c.tp + c.fp + c.fn;
  if (uni == 0) return 100.0;
  return 100.0 * static_cast<double>(c.tp) / static_cast<double>(uni);
}

PrecisionRecall f_score(const PixelCounts& c) {
  if (c.tp + c.fp + c.fn == 0) return {1.0, 1.0, 1.0};
  PrecisionRecall r;
  if (c.tp + c.fp > 0) r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) r.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (r.precision + r.recall > 0) r.f_score = 2 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

double fg_iou(const Mask& pred, const Mask& gt) {
  PixelCounts c;
  c.add(pred, gt);
  return fg_iou(c);
}

PrecisionRecall f_score(const Mask& pred, const Mask& gt) {
  PixelCounts c;
  c.add(pred, gt);
  return f_score(c);
}

Mask mask_boundary(const Mask& gt) {
  Mask out(gt.height, gt.width);
  for (int y = 0; y < gt.height; ++y) {
    for (int x = 0; x < gt.width; ++x) {
      if (!gt.at(y, x)) continue;
      const bool edge = (y > 0 && !gt.at(y - 1, x)) || (y + 1 < gt.height && !gt.at(y + 1, x)) ||
                        (x > 0 && !gt.at(y, x - 1)) || (x + 1 < gt.width && !gt.at(y, x + 1));
      out.at(y, x) = edge ? 1 : 0;
    }
  }
  return out;
}

Mask edge_band(const Mask& gt, int radius) {
  if (radius < 1) throw ConfigError("edge band radius must be >= 1");
  const Mask boundary = mask_boundary(gt);
  // Separable Chebyshev dilation: rows, then columns.
  Mask rows(gt.height, gt.width), out(gt.height, gt.width);
  for (int y = 0; y < gt.height; ++y) {
    for (int x = 0; x < gt.width; ++x) {
      if (!boundary.at(y, x)) continue;
      for (int xx = std::max(0, x - radius); xx <= std::min(gt.width - 1, x + radius); ++xx) rows.at(y, xx) = 1;
    }
  }
  for (int y = 0; y < gt.height; ++y) {
    for (int x = 0; x < gt.width; ++x) {
      if (!rows.at(y, x)) continue;
      for (int yy = std::max(0, y - radius); yy <= std::min(gt.height - 1, y + radius); ++yy) out.at(yy, x) = 1;
    }
  }
  return out;
}

namespace {

void fill_report(MetricReport& r, const PixelCounts& all, const PixelCounts& band, std::uint64_t band_pixels) {
  r.counts = all;
  r.edge_counts = band;
  r.fg_iou = fg_iou(all);
  const PrecisionRecall prf = f_score(all);
  r.precision = prf.precision;
  r.recall = prf.recall;
  r.f_score = prf.f_score;
  r.edge_band_empty = band_pixels == 0;
  r.edge_fg_iou = fg_iou(band);
  r.edge_f_score = f_score(band).f_score;
}

}  // namespace

MetricReport edge_band_metrics(const Mask& pred, const Mask& gt, int band_radius) {
  MetricAccumulator acc(band_radius);
  acc.add(pred, gt);
  return acc.report();
}

MetricAccumulator::MetricAccumulator(int band_radius) : radius_(band_radius) {
  if (band_radius < 1) throw ConfigError("edge band radius must be >= 1");
}

void MetricAccumulator::add(const Mask& pred, const Mask& gt) {
  if (!pred.is_binary() || !gt.is_binary()) throw ConfigError("metric inputs must be binary masks");
  all_.add(pred, gt);
  const Mask band = edge_band(gt, radius_);
  band_.add(pred, gt, &band);
  band_pixels_ += band.count();
  ++images_;
}

MetricReport MetricAccumulator::report() const {
  MetricReport r;
  r.images = images_;
  r.band_radius = radius_;
  fill_report(r, all_, band_, band_pixels_);
  return r;
}

std::string MetricReport::to_text() const {
  std::ostringstream os;
  os << std::fixed;
  os << "accumulation=global\n";
  os << "images=" << images << '\n';
  os << std::setprecision(2) << "fgIoU=" << fg_iou << '\n';
  os << std::setprecision(4) << "f_score=" << f_score << '\n';
  os << "precision=" << precision << '\n';
  os << "recall=" << recall << '\n';
  os << "band_radius=" << band_radius << '\n';
  os << "edge_band_empty=" << (edge_band_empty ? "true" : "false") << '\n';
  os << std::setprecision(2) << "edge_fgIoU=" << edge_fg_iou << '\n';
  os << std::setprecision(4) << "edge_f_score=" << edge_f_score << '\n';
  return os.str();
}

nlohmann::json MetricReport::to_json() const {
  auto counts_json = [](const PixelCounts& c) {
    return nlohmann::json{{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
  };
  return {{"accumulation", "global"},
          {"images", images},
          {"fgIoU", fg_iou},
          {"f_score", f_score},
          {"precision", precision},
          {"recall", recall},
          {"band_radius", band_radius},
          {"edge_band_empty", edge_band_empty},
          {"edge_fgIoU", edge_fg_iou},
          {"edge_f_score", edge_f_score},
          {"counts", counts_json(counts)},
          {"edge_counts", counts_json(edge_counts)}};
}

}  // namespace edgeseg
