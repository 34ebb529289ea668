#pragma once

#include <vector>

#include "wordspot/geometry.hpp"
#include "wordspot/image.hpp"

namespace wordspot {

/// Dilated text proposals: binarize at several multiples of the page mean,
/// close each binary image with each kernel, and keep component boxes.
struct DtpConfig {
  std::vector<double> mean_multiples{0.7, 0.8, 0.9};
  std::vector<StructuringElement> kernels = default_kernels();
  double min_area = 24.0;  // box area, px^2
  double pad = 0.0;        // grown on every side, clamped to the page
  double dedup_iou = 0.95;

  /// Widths {1,3,5,7,9,11,15,21} x heights {1,3,5}.
  static std::vector<StructuringElement> default_kernels();
  void validate() const;
};

/// Grows each side by `pad` and clamps to the page.
Box pad_box(const Box& box, double pad, const Bounds& bounds);

/// Removes near duplicates from boxes already in canonical order: a box is
/// dropped when its IoU with an earlier kept box exceeds `max_iou`.
std::vector<Box> dedup_boxes(const std::vector<Box>& sorted_boxes, double max_iou);

/// Proposals in canonical (top, left, width, height) order.
std::vector<Box> dtp_proposals(const GrayImage& img, const DtpConfig& cfg = {});

}  // namespace wordspot
