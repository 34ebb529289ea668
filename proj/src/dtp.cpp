#include "wordspot/dtp.hpp"

#include <algorithm>

#include "wordspot/errors.hpp"

namespace wordspot {

std::vector<StructuringElement> DtpConfig::default_kernels() {
  std::vector<StructuringElement> kernels;
  for (int w : {1, 3, 5, 7, 9, 11, 15, 21}) {
    for (int h : {1, 3, 5}) kernels.push_back({w, h});
  }
  return kernels;
}

void DtpConfig::validate() const {
  if (mean_multiples.empty()) throw Error(ErrorCode::InvalidConfig, "dtp needs at least one threshold");
  for (double m : mean_multiples) {
    if (!(m > 0.0)) throw Error(ErrorCode::InvalidConfig, "dtp mean multiples must be positive");
  }
  if (kernels.empty()) throw Error(ErrorCode::InvalidConfig, "dtp needs at least one kernel");
  for (const auto& k : kernels) k.validate();
  if (pad < 0.0) throw Error(ErrorCode::InvalidConfig, "dtp pad must be non-negative");
}

Box pad_box(const Box& box, double pad, const Bounds& bounds) {
  if (pad < 0.0) throw Error(ErrorCode::InvalidConfig, "pad must be non-negative");
  return clamp_to(Box{box.x_c, box.y_c, box.w + 2.0 * pad, box.h + 2.0 * pad}, bounds);
}

std::vector<Box> dedup_boxes(const std::vector<Box>& sorted_boxes, double max_iou) {
  std::vector<Box> kept;
  for (const auto& b : sorted_boxes) {
    bool duplicate = false;
    for (auto it = kept.rbegin(); it != kept.rend(); ++it) {
      // Kept boxes are ordered by top edge. A kept box whose top is more than
      // b.h above b's top has vertical IoU below 1/2 with b, as do all before it.
      if (max_iou >= 0.5 && b.y0() - it->y0() > b.h) break;
      if (iou(*it, b) > max_iou) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) kept.push_back(b);
  }
  return kept;
}

std::vector<Box> dtp_proposals(const GrayImage& img, const DtpConfig& cfg) {
  cfg.validate();
  std::vector<Box> boxes;
  if (img.empty()) return boxes;
  const double mean = mean_intensity(img);
  const Bounds bounds{static_cast<double>(img.width), static_cast<double>(img.height)};
  for (double multiple : cfg.mean_multiples) {
    const auto binary = threshold(img, multiple * mean);
    if (binary.count() == 0) continue;
    for (const auto& kernel : cfg.kernels) {
      for (const auto& comp : connected_components(binary_close(binary, kernel))) {
        if (comp.box.area() < cfg.min_area) continue;
        boxes.push_back(cfg.pad > 0.0 ? pad_box(comp.box, cfg.pad, bounds) : comp.box);
      }
    }
  }
  std::sort(boxes.begin(), boxes.end(), canonical_less);
  boxes.erase(std::unique(boxes.begin(), boxes.end()), boxes.end());
  return dedup_boxes(boxes, cfg.dedup_iou);
}

}  // namespace wordspot
