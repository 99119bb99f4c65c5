#pragma once

#include "edgeseg/edge_extractor.hpp"
#include "edgeseg/image.hpp"

namespace edgeseg {

/// Replaces every 8-connected component of a binary mask by its filled
/// bounding box and returns the union. Boxes that touch or overlap form a
/// new component, so the pass repeats until nothing changes; the result is
/// a union of separated rectangles.
Mask derive_box_mask(const Mask& text);

/// Ground truth for one image: the text mask and its box-level area mask.
struct MaskPair {
  Mask text;
  Mask area;

  static MaskPair from_text(Mask text);
  /// Throws ConfigError unless both masks are binary, equally sized and
  /// text is covered by area.
  void validate() const;
};

struct LossReport {
  double total = 0.0;
  double seg = 0.0;
  double det = 0.0;
  double lambda = 1.0;
};

template <typename Scalar>
struct JointLoss {
  Tensor<Scalar> total;
  Tensor<Scalar> seg;
  Tensor<Scalar> det;  // undefined when no detector is present
  LossReport report;
};

/// L = CE(seg, text) + lambda * CE(area, nearest-downsampled box mask).
/// Pass area == nullptr for models without a detector; the det term is 0.
template <typename Scalar>
JointLoss<Scalar> joint_loss(const Tensor<Scalar>& seg_logits, const AreaMask<Scalar>* area, const MaskPair& gt,
                             double lambda);

std::vector<int> mask_labels(const Mask& mask);

}  // namespace edgeseg
