#include "wordspot/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <tuple>

#include "wordspot/errors.hpp"

namespace wordspot {

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0());
  const double ih = std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

Box clamp_to(const Box& box, const Bounds& bounds) {
  const double x0 = std::clamp(box.x0(), 0.0, bounds.width);
  const double y0 = std::clamp(box.y0(), 0.0, bounds.height);
  const double x1 = std::clamp(box.x1(), 0.0, bounds.width);
  const double y1 = std::clamp(box.y1(), 0.0, bounds.height);
  return Box::from_corners(x0, y0, x1, y1);
}

bool canonical_less(const Box& a, const Box& b) {
  return std::make_tuple(a.y0(), a.x0(), a.w, a.h) < std::make_tuple(b.y0(), b.x0(), b.w, b.h);
}

std::vector<std::size_t> nms(std::span<const Box> boxes, std::span<const double> scores,
                             double threshold) {
  if (boxes.size() != scores.size()) {
    throw Error(ErrorCode::DimensionMismatch, "nms: boxes and scores differ in length");
  }
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<std::size_t> keep;
  std::vector<char> suppressed(boxes.size(), 0);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto cur = order[i];
    if (suppressed[cur]) continue;
    keep.push_back(cur);
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      const auto other = order[j];
      if (!suppressed[other] && iou(boxes[cur], boxes[other]) > threshold) suppressed[other] = 1;
    }
  }
  return keep;
}

RegressionTarget encode_box(const Box& anchor, const Box& gt) {
  return {(gt.x_c - anchor.x_c) / anchor.w, (gt.y_c - anchor.y_c) / anchor.h,
          std::log(gt.w / anchor.w), std::log(gt.h / anchor.h)};
}

Box decode_box(const Box& anchor, const RegressionTarget& t, std::optional<Bounds> bounds) {
  Box out{anchor.x_c + t.tx * anchor.w, anchor.y_c + t.ty * anchor.h, anchor.w * std::exp(t.tw),
          anchor.h * std::exp(t.th)};
  return bounds ? clamp_to(out, *bounds) : out;
}

std::vector<Box> anchor_grid(int image_w, int image_h, const AnchorConfig& cfg) {
  std::vector<Box> anchors;
  if (image_w <= 0 || image_h <= 0 || cfg.stride <= 0) return anchors;
  const int cols = image_w / cfg.stride;
  const int rows = image_h / cfg.stride;
  anchors.reserve(static_cast<std::size_t>(cols) * static_cast<std::size_t>(rows) *
                  cfg.per_position());
  const double s = cfg.stride;
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      const double cx = s * (j + 0.5);
      const double cy = s * (i + 0.5);
      for (double h : cfg.heights) {
        for (double w : cfg.widths) anchors.push_back({cx, cy, w, h});
      }
    }
  }
  return anchors;
}

void MatchConfig::validate() const {
  if (!(0.0 <= neg_iou && neg_iou < pos_iou && pos_iou <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "match config needs 0 <= neg_iou < pos_iou <= 1");
  }
  if (pos_per_batch > batch) {
    throw Error(ErrorCode::InvalidConfig, "match config needs pos_per_batch <= batch");
  }
}

std::vector<ProposalLabel> label_proposals(std::span<const Box> proposals,
                                           std::span<const LabeledBox> gts,
                                           const MatchConfig& cfg) {
  cfg.validate();
  std::vector<ProposalLabel> labels(proposals.size());
  for (std::size_t p = 0; p < proposals.size(); ++p) {
    auto& out = labels[p];
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double v = iou(proposals[p], gts[g].box);
      if (v > out.max_iou) {
        out.max_iou = v;
        out.gt = g;
      }
    }
    if (out.max_iou > cfg.pos_iou) {
      out.label = MatchLabel::positive;
    } else if (out.max_iou < cfg.neg_iou) {
      out.label = MatchLabel::negative;
    } else {
      out.label = MatchLabel::ignored;
    }
  }
  return labels;
}

MatchResult match_and_sample(std::span<const Box> proposals, std::span<const LabeledBox> gts,
                             const MatchConfig& cfg, std::uint64_t seed) {
  const auto labels = label_proposals(proposals, gts, cfg);
  std::vector<std::size_t> pos;
  std::vector<std::size_t> neg;
  for (std::size_t p = 0; p < labels.size(); ++p) {
    if (labels[p].label == MatchLabel::positive) pos.push_back(p);
    if (labels[p].label == MatchLabel::negative) neg.push_back(p);
  }

  std::mt19937_64 rng(seed);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  pos.resize(std::min(pos.size(), cfg.pos_per_batch));
  neg.resize(std::min(neg.size(), cfg.batch - pos.size()));
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());

  MatchResult result;
  result.no_positives = pos.empty();
  result.negatives = std::move(neg);
  for (auto p : pos) {
    const auto g = labels[p].gt;
    result.positives.push_back({p, g, encode_box(proposals[p], gts[g].box)});
  }
  return result;
}

}  // namespace wordspot
