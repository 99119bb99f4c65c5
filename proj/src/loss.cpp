#include "edgeseg/loss.hpp"

#include <algorithm>
#include <cmath>

#include "edgeseg/errors.hpp"

namespace edgeseg {

namespace {

Mask box_pass(const Mask& text) {
  Mask out(text.height, text.width);
  std::vector<std::uint8_t> seen(text.data.size(), 0);
  std::vector<int> stack;
  for (int y0 = 0; y0 < text.height; ++y0) {
    for (int x0 = 0; x0 < text.width; ++x0) {
      const int start = y0 * text.width + x0;
      if (!text.data[start] || seen[start]) continue;
      int top = y0, bottom = y0, left = x0, right = x0;
      seen[start] = 1;
      stack.assign(1, start);
      while (!stack.empty()) {
        const int p = stack.back();
        stack.pop_back();
        const int y = p / text.width, x = p % text.width;
        top = std::min(top, y);
        bottom = std::max(bottom, y);
        left = std::min(left, x);
        right = std::max(right, x);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = y + dy, nx = x + dx;
            if (ny < 0 || nx < 0 || ny >= text.height || nx >= text.width) continue;
            const int q = ny * text.width + nx;
            if (text.data[q] && !seen[q]) {
              seen[q] = 1;
              stack.push_back(q);
            }
          }
        }
      }
      for (int y = top; y <= bottom; ++y) std::fill_n(&out.at(y, left), right - left + 1, std::uint8_t{1});
    }
  }
  return out;
}

}  // namespace

Mask derive_box_mask(const Mask& text) {
  Mask out = box_pass(text);
  for (Mask next = box_pass(out); !(next == out); next = box_pass(out)) out = std::move(next);
  return out;
}

MaskPair MaskPair::from_text(Mask text) {
  MaskPair pair;
  pair.area = derive_box_mask(text);
  pair.text = std::move(text);
  return pair;
}

void MaskPair::validate() const {
  if (!text.is_binary() || !area.is_binary()) throw ConfigError("ground-truth masks must be binary");
  if (text.height != area.height || text.width != area.width) {
    throw ConfigError("text and area masks differ in size");
  }
  for (std::size_t i = 0; i < text.data.size(); ++i) {
    if (text.data[i] && !area.data[i]) throw ConfigError("text mask is not covered by its area mask");
  }
}

std::vector<int> mask_labels(const Mask& mask) {
  if (!mask.is_binary()) throw ConfigError("label mask must be binary");
  return std::vector<int>(mask.data.begin(), mask.data.end());
}

template <typename Scalar>
JointLoss<Scalar> joint_loss(const Tensor<Scalar>& seg_logits, const AreaMask<Scalar>* area, const MaskPair& gt,
                             double lambda) {
  if (!gt.text.is_binary() || !gt.area.is_binary()) throw ConfigError("ground-truth masks must be binary");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be finite and >= 0");
  if (seg_logits.rank() != 3 || seg_logits.dim(0) != 2 || seg_logits.dim(1) != static_cast<std::size_t>(gt.text.height) ||
      seg_logits.dim(2) != static_cast<std::size_t>(gt.text.width)) {
    throw ShapeError("segmentation logits " + to_string(seg_logits.shape()) + " do not match a " +
                     std::to_string(gt.text.height) + "x" + std::to_string(gt.text.width) + " mask");
  }
  JointLoss<Scalar> out;
  const std::vector<int> text_labels = mask_labels(gt.text);
  out.seg = cross_entropy(seg_logits, std::span<const int>(text_labels));
  out.report.lambda = lambda;
  out.report.seg = static_cast<double>(out.seg.item());
  if (area) {
    const Tensor<Scalar>& logits = area->logits;
    const Mask target = resize_nearest(gt.area, static_cast<int>(logits.dim(1)), static_cast<int>(logits.dim(2)));
    const std::vector<int> area_labels = mask_labels(target);
    out.det = cross_entropy(logits, std::span<const int>(area_labels));
    out.report.det = static_cast<double>(out.det.item());
    out.total = add(out.seg, scale(out.det, static_cast<Scalar>(lambda)));
  } else {
    out.total = out.seg;
  }
  out.report.total = out.report.seg + lambda * out.report.det;
  return out;
}

template JointLoss<float> joint_loss(const Tensor<float>&, const AreaMask<float>*, const MaskPair&, double);
template JointLoss<double> joint_loss(const Tensor<double>&, const AreaMask<double>*, const MaskPair&, double);

}  // namespace edgeseg
