#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace wordspot {

/// Axis-aligned box in page pixel coordinates, stored in center form.
/// A pixel (x, y) covers [x, x+1) x [y, y+1).
struct Box {
  double x_c = 0.0;
  double y_c = 0.0;
  double w = 0.0;
  double h = 0.0;

  static Box from_corners(double x0, double y0, double x1, double y1) {
    return {(x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0};
  }
  /// Top-left corner plus size: the wire format of boxes everywhere else.
  static Box from_xywh(double x, double y, double w, double h) {
    return from_corners(x, y, x + w, y + h);
  }

  double x0() const { return x_c - w / 2.0; }
  double y0() const { return y_c - h / 2.0; }
  double x1() const { return x_c + w / 2.0; }
  double y1() const { return y_c + h / 2.0; }
  double area() const { return w * h; }
  bool valid() const { return w > 0.0 && h > 0.0; }

  bool operator==(const Box&) const = default;
};

struct LabeledBox {
  Box box;
  std::string label;
};

/// Image extent used for clamping; boxes are clamped to [0,width] x [0,height].
struct Bounds {
  double width = 0.0;
  double height = 0.0;
};

double iou(const Box& a, const Box& b);
Box clamp_to(const Box& box, const Bounds& bounds);

/// Ordering by top, left, width, height. Used wherever a canonical box order
/// is needed.
bool canonical_less(const Box& a, const Box& b);

/// Greedy non-maximum suppression. A remaining box is discarded when its IoU
/// with a kept box is strictly greater than `threshold`, so threshold 0 drops
/// any overlap. Equal scores keep the lower index first. Returns kept indices
/// in descending score order.
std::vector<std::size_t> nms(std::span<const Box> boxes, std::span<const double> scores,
                             double threshold);

struct RegressionTarget {
  double tx = 0.0;
  double ty = 0.0;
  double tw = 0.0;
  double th = 0.0;
};

RegressionTarget encode_box(const Box& anchor, const Box& gt);
Box decode_box(const Box& anchor, const RegressionTarget& t,
               std::optional<Bounds> bounds = std::nullopt);

struct AnchorConfig {
  std::vector<double> heights{20, 40, 60};
  std::vector<double> widths{30, 90, 150, 210, 300};
  int stride = 8;

  std::size_t per_position() const { return heights.size() * widths.size(); }
};

/// Anchors centred at stride*(i + 1/2) for every full stride cell, row-major
/// over cells, then heights, then widths.
std::vector<Box> anchor_grid(int image_w, int image_h, const AnchorConfig& cfg = {});

struct MatchConfig {
  double pos_iou = 0.75;
  double neg_iou = 0.4;
  std::size_t batch = 256;
  std::size_t pos_per_batch = 128;

  void validate() const;
};

enum class MatchLabel : std::int8_t { negative = 0, positive = 1, ignored = -1 };

struct ProposalLabel {
  MatchLabel label = MatchLabel::negative;
  std::size_t gt = 0;  // argmax ground truth; meaningful for positives
  double max_iou = 0.0;
};

/// Positive iff best IoU > pos_iou, negative iff best IoU < neg_iou.
/// Ties in the argmax go to the lower ground-truth index.
std::vector<ProposalLabel> label_proposals(std::span<const Box> proposals,
                                           std::span<const LabeledBox> gts,
                                           const MatchConfig& cfg);

struct MatchedPositive {
  std::size_t proposal = 0;
  std::size_t gt = 0;
  RegressionTarget target;
};

struct MatchResult {
  std::vector<MatchedPositive> positives;  // sorted by proposal index
  std::vector<std::size_t> negatives;      // sorted

  /// Set when no proposal cleared pos_iou; the page is unusable for
  /// embedding losses but its negatives still train the scorer.
  bool no_positives = false;
};

/// Labels every proposal, then samples without replacement up to
/// pos_per_batch positives and fills the rest of the batch with negatives.
MatchResult match_and_sample(std::span<const Box> proposals, std::span<const LabeledBox> gts,
                             const MatchConfig& cfg, std::uint64_t seed);

}  // namespace wordspot
