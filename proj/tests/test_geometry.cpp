#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "oracles.hpp"
#include "wordspot/errors.hpp"
#include "wordspot/geometry.hpp"

using namespace wordspot;

TEST_CASE("iou basics") {
  const auto a = Box::from_xywh(0, 0, 10, 10);
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, Box::from_xywh(10, 0, 10, 10)) == 0.0);
  CHECK(iou(a, Box::from_xywh(5, 0, 10, 10)) == doctest::Approx(50.0 / 150.0));
}

TEST_CASE("nms equals the brute-force reference") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> score(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = rng() % 40;
    std::vector<Box> boxes;
    std::vector<double> scores;
    for (std::size_t i = 0; i < n; ++i) {
      boxes.push_back(oracle::random_box(rng));
      // Coarse scores so ties occur.
      scores.push_back(std::round(score(rng) * 8.0) / 8.0);
    }
    const double t = (trial % 5) * 0.2;
    CHECK(nms(boxes, scores, t) == oracle::nms(boxes, scores, t));
  }
}

TEST_CASE("zero-overlap nms keeps disjoint boxes") {
  std::vector<Box> boxes{Box::from_xywh(0, 0, 10, 10), Box::from_xywh(5, 5, 10, 10), Box::from_xywh(10, 0, 5, 5)};
  std::vector<double> scores{0.5, 0.9, 0.1};
  const auto keep = nms(boxes, scores, 0.0);
  CHECK(keep == std::vector<std::size_t>{1, 2});  // edge contact is not overlap
}

TEST_CASE("encode and decode are inverse") {
  std::mt19937_64 rng(3);
  double worst = 0.0;
  for (int i = 0; i < 500; ++i) {
    const auto anchor = oracle::random_box(rng);
    const auto gt = oracle::random_box(rng);
    const auto back = decode_box(anchor, encode_box(anchor, gt));
    for (auto [x, y] : {std::pair{back.x_c, gt.x_c}, {back.y_c, gt.y_c}, {back.w, gt.w}, {back.h, gt.h}}) {
      worst = std::max(worst, std::abs(x - y) / std::max(1.0, std::abs(y)));
    }
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("decode clamps to bounds when asked") {
  const auto anchor = Box::from_xywh(90, 90, 20, 20);
  const auto b = decode_box(anchor, {1.0, 1.0, 0.5, 0.5}, Bounds{100, 100});
  CHECK(b.x1() <= 100.0);
  CHECK(b.y1() <= 100.0);
}

TEST_CASE("anchor grid over a 1720 page") {
  CHECK(anchor_grid(1720, 1720).size() == 693375);
  const auto small = anchor_grid(16, 8);
  REQUIRE(small.size() == 30);
  CHECK(small[0].x_c == 4.0);
  CHECK(small[0].y_c == 4.0);
  CHECK(small[15].x_c == 12.0);
}

TEST_CASE("match_and_sample agrees with the brute-force labelling") {
  std::mt19937_64 rng(5);
  MatchConfig cfg;
  cfg.batch = 16;
  cfg.pos_per_batch = 8;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<LabeledBox> gts;
    for (std::size_t g = 0; g < 1 + rng() % 5; ++g) gts.push_back({oracle::random_box(rng), "w"});
    std::vector<Box> props;
    for (std::size_t i = 0; i < 40; ++i) {
      if (i % 2 == 0) {
        const auto& g = gts[rng() % gts.size()].box;
        std::uniform_real_distribution<double> j(-0.1, 0.1);
        props.push_back({g.x_c + j(rng) * g.w, g.y_c + j(rng) * g.h, g.w * (1 + j(rng)), g.h * (1 + j(rng))});
      } else {
        props.push_back(oracle::random_box(rng));
      }
    }
    const auto ref = oracle::label(props, gts, cfg.pos_iou, cfg.neg_iou);
    const auto got = label_proposals(props, gts, cfg);
    for (std::size_t i = 0; i < props.size(); ++i) {
      CHECK(static_cast<int>(got[i].label) == ref[i].kind);
      CHECK(got[i].max_iou == doctest::Approx(ref[i].max_iou).epsilon(1e-12));
      if (ref[i].kind == 1) CHECK(got[i].gt == ref[i].gt);
    }
    const auto seed = static_cast<std::uint64_t>(trial);
    const auto res = match_and_sample(props, gts, cfg, seed);
    std::size_t n_pos = 0, n_neg = 0;
    for (const auto& r : ref) n_pos += r.kind == 1, n_neg += r.kind == 0;
    CHECK(res.positives.size() == std::min(n_pos, cfg.pos_per_batch));
    CHECK(res.negatives.size() == std::min(n_neg, cfg.batch - res.positives.size()));
    CHECK(res.no_positives == (n_pos == 0));
    for (const auto& p : res.positives) {
      CHECK(ref[p.proposal].kind == 1);
      CHECK(p.gt == ref[p.proposal].gt);
    }
    for (auto n : res.negatives) CHECK(ref[n].kind == 0);
    CHECK(std::is_sorted(res.negatives.begin(), res.negatives.end()));
    const auto again = match_and_sample(props, gts, cfg, seed);
    CHECK(again.negatives == res.negatives);
  }
}

TEST_CASE("match config validation") {
  MatchConfig bad;
  bad.pos_iou = 0.3;
  CHECK_THROWS_AS(bad.validate(), Error);
}
