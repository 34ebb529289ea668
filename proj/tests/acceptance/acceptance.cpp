// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "gradient_checks.hpp"
#include "json.hpp"
#include "oracles.hpp"
#include "wordspot/augmentation.hpp"
#include "wordspot/dtp.hpp"
#include "wordspot/errors.hpp"
#include "wordspot/evaluation.hpp"
#include "wordspot/geometry.hpp"
#include "wordspot/index.hpp"
#include "wordspot/losses.hpp"

using namespace wordspot;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const fs::path kWork = fs::temp_directory_path() / "wordspot_acceptance";

/// Runs the command-line tool; stdout goes to `out` when given.
void cli(const std::string& args, const std::optional<fs::path>& out = std::nullopt) {
  const std::string cmd = std::string(WORDSPOT_CLI) + " " + args + " >" +
                          (out ? out->string() : std::string("/dev/null")) + " 2>" +
                          (kWork / "last_stderr.txt").string();
  const int status = std::system(cmd.c_str());
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw std::runtime_error("command failed: " + args + ": " + slurp(kWork / "last_stderr.txt"));
  }
}

std::string p(const std::string& name) { return (kWork / name).string(); }

Outcome embedding_dims() {
  std::mt19937_64 rng(101);
  const Alphabet alphabet;
  const auto phoc_text = TextEmbedder::make(EmbeddingKind::phoc);
  const auto dctow_text = TextEmbedder::make(EmbeddingKind::dctow);
  for (int i = 0; i < 1000; ++i) {
    const auto w = oracle::random_word(rng, alphabet, 1, 20);
    if (phoc_text.embed(w).dim() != 540 || dctow_text.embed(w).dim() != 108) {
      return {false, "wrong dimension for '" + w + "'"};
    }
  }
  return {true, "phoc 540, dctow 108 on 1000 words"};
}

Outcome embedding_oracles() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(102);
  const PhocConfig pc;
  const DctowConfig dc;
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto w = oracle::random_word(rng, pc.alphabet, 1, 20);
    const auto a = phoc(w, pc).values, b = oracle::phoc(w, pc.levels, pc.alphabet);
    const auto c = dctow(w, dc).values, d = oracle::dctow(w, dc.r, dc.alphabet);
    if (a.size() != b.size() || c.size() != d.size()) return {false, "size mismatch"};
    for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(a[k] - b[k]));
    for (std::size_t k = 0; k < c.size(); ++k) worst = std::max(worst, std::abs(c[k] - d[k]));
  }
  const double s = seconds_since(t0);
  return {worst < 1e-12 && s < 5.0, "max abs diff " + fmt(worst) + ", " + fmt(s, 3) + " s"};
}

Outcome geometry_oracles() {
  std::mt19937_64 rng(103);
  std::uniform_real_distribution<double> score(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Box> boxes;
    std::vector<double> scores;
    for (std::size_t i = 0; i < rng() % 40; ++i) {
      boxes.push_back(oracle::random_box(rng));
      scores.push_back(std::round(score(rng) * 8.0) / 8.0);
    }
    const double t = (trial % 5) * 0.2;
    if (nms(boxes, scores, t) != oracle::nms(boxes, scores, t)) return {false, "nms mismatch"};
  }
  MatchConfig cfg;
  cfg.batch = 16;
  cfg.pos_per_batch = 8;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<LabeledBox> gts;
    for (std::size_t g = 0; g < 1 + rng() % 5; ++g) gts.push_back({oracle::random_box(rng), "w"});
    std::vector<Box> props;
    std::uniform_real_distribution<double> j(-0.1, 0.1);
    for (std::size_t i = 0; i < 40; ++i) {
      if (i % 2 == 0) {
        const auto& g = gts[rng() % gts.size()].box;
        props.push_back({g.x_c + j(rng) * g.w, g.y_c + j(rng) * g.h, g.w * (1 + j(rng)), g.h * (1 + j(rng))});
      } else {
        props.push_back(oracle::random_box(rng));
      }
    }
    const auto ref = oracle::label(props, gts, cfg.pos_iou, cfg.neg_iou);
    const auto res = match_and_sample(props, gts, cfg, static_cast<std::uint64_t>(trial));
    std::size_t n_pos = 0, n_neg = 0;
    for (const auto& r : ref) n_pos += r.kind == 1, n_neg += r.kind == 0;
    bool ok = res.positives.size() == std::min(n_pos, cfg.pos_per_batch) &&
              res.negatives.size() == std::min(n_neg, cfg.batch - res.positives.size());
    for (const auto& mp : res.positives) ok = ok && ref[mp.proposal].kind == 1 && mp.gt == ref[mp.proposal].gt;
    for (auto n : res.negatives) ok = ok && ref[n].kind == 0;
    if (!ok) return {false, "match_and_sample mismatch"};
  }
  double worst = 0.0;
  for (int i = 0; i < 500; ++i) {
    const auto anchor = oracle::random_box(rng), gt = oracle::random_box(rng);
    const auto back = decode_box(anchor, encode_box(anchor, gt));
    for (auto [x, y] : {std::pair{back.x_c, gt.x_c}, {back.y_c, gt.y_c}, {back.w, gt.w}, {back.h, gt.h}}) {
      worst = std::max(worst, std::abs(x - y) / std::max(1.0, std::abs(y)));
    }
  }
  return {worst < 1e-9, "500 nms + 500 matching instances agree; round trip err " + fmt(worst)};
}

Outcome anchor_count() {
  const auto n = anchor_grid(1720, 1720).size();
  return {n == 693375, std::to_string(n) + " anchors"};
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  auto errs = gradcheck::loss_errors(100, 104);
  errs["network"] = gradcheck::network_errors(100, 105);
  double worst = 0.0;
  std::string detail;
  for (const auto& [name, e] : errs) {
    worst = std::max(worst, e);
    detail += name + " " + fmt(e, 2) + ", ";
  }
  const double s = seconds_since(t0);
  return {errs.size() == 6 && worst < 1e-4 && s < 30.0, detail + fmt(s, 3) + " s"};
}

Outcome weighted_total() {
  const double v = total_loss({1, 1, 1, 1, 1});
  return {v == 3.22, "total " + fmt(v, 17)};
}

Outcome lr_schedule() {
  Adam adam;
  std::vector<Matrix> q{Matrix::Zero(1, 1)};
  for (int i = 0; i < 10000; ++i) adam.step(q, {Matrix::Zero(1, 1)});
  const double a = adam.current_lr();
  for (int i = 0; i < 10000; ++i) adam.step(q, {Matrix::Zero(1, 1)});
  const double b = adam.current_lr();
  return {a == 1e-4 && b == 1e-5, "lr " + fmt(a, 17) + " then " + fmt(b, 17)};
}

Outcome evaluation_correctness() {
  const double ap = average_precision(std::vector<bool>{true, false, true}, 2);
  std::mt19937_64 rng(106);
  std::vector<GroundTruthWord> gts;
  const std::vector<std::string> vocab{"cat", "dog", "tree", "house", "zzz"};
  for (int page = 0; page < 3; ++page) {
    for (int i = 0; i < 20; ++i) {
      gts.push_back({"p" + std::to_string(page), Box::from_xywh(120.0 * (i % 5), 60.0 * (i / 5), 100, 40),
                     vocab[rng() % vocab.size()]});
    }
  }
  const auto report = evaluate(oracle::perfect_index(gts, EmbeddingKind::dctow), gts, EvalConfig{});
  const double m25 = report.map.at(0.25), m50 = report.map.at(0.5);
  return {std::abs(ap - 5.0 / 6.0) < 1e-12 && m25 == 1.0 && m50 == 1.0,
          "AP " + fmt(ap, 17) + ", oracle MAP " + fmt(m25) + " / " + fmt(m50)};
}

struct EndToEnd {
  Outcome outcome;
  bool ran = false;
};

EndToEnd synthetic_end_to_end() {
  const auto t0 = Clock::now();
  cli("synth --out " + p("train") + " --pages 20 --seed 1");
  cli("synth --out " + p("test") + " --pages 5 --seed 1000");
  cli("train --corpus " + p("train") + " --out " + p("model.wspt"));
  const double train_s = seconds_since(t0);
  cli("index --pages " + p("test") + " --model " + p("model.wspt") + " --out " + p("index.wsix"));
  cli("eval --index " + p("index.wsix") + " --gt " + p("test") + " --out " + p("qbs.json"));
  cli("eval --index " + p("index.wsix") + " --gt " + p("test") + " --mode qbe --model " + p("model.wspt") +
      " --out " + p("qbe.json"));
  const double total_s = seconds_since(t0);

  const auto qbs = json::parse(slurp(kWork / "qbs.json"));
  const auto qbe = json::parse(slurp(kWork / "qbe.json"));
  const double qbs25 = qbs["map"]["0.25"], qbs50 = qbs["map"]["0.5"], qbe25 = qbe["map"]["0.25"];

  // Raw DTP recall on the test pages, before any wordness filtering.
  std::vector<std::vector<Box>> props, gt_boxes;
  std::size_t n_gt = 0;
  for (const auto& e : list_dataset(kWork / "test")) {
    props.push_back(dtp_proposals(read_image(e.image)));
    gt_boxes.emplace_back();
    for (const auto& w : read_ground_truth(*e.ground_truth).words) gt_boxes.back().push_back(w.box);
    n_gt += gt_boxes.back().size();
  }
  const double recall = proposal_recall(props, gt_boxes, 0.5);
  const auto index = load_index(kWork / "index.wsix");
  const double ratio = static_cast<double>(index.proposal_count()) / static_cast<double>(n_gt);

  const bool pass = recall >= 0.99 && qbs25 >= 0.95 && qbs50 >= 0.90 && qbe25 >= 0.90 && ratio >= 1.0 &&
                    ratio <= 6.0 && total_s < 600.0;
  return {{pass, "DTP recall " + fmt(recall) + ", QbS MAP " + fmt(qbs25) + " @0.25 / " + fmt(qbs50) +
                     " @0.5, QbE MAP " + fmt(qbe25) + " @0.25, proposals/gt " + fmt(ratio, 3) + ", train " +
                     fmt(train_s, 4) + " s, total " + fmt(total_s, 4) + " s"},
          true};
}

Outcome determinism(bool have_e2e) {
  if (!have_e2e) return {false, "needs the end-to-end artifacts"};
  cli("synth --out " + p("train_again") + " --pages 20 --seed 1");
  for (const auto& e : fs::directory_iterator(kWork / "train")) {
    if (slurp(e.path()) != slurp(kWork / "train_again" / e.path().filename())) {
      return {false, "synth differs at " + e.path().filename().string()};
    }
  }
  // Training twice at full length would double the run time; a short schedule
  // exercises the same code path.
  cli("train --corpus " + p("train") + " --out " + p("short_a.wspt") + " --iterations 300");
  cli("train --corpus " + p("train") + " --out " + p("short_b.wspt") + " --iterations 300");
  if (slurp(kWork / "short_a.wspt") != slurp(kWork / "short_b.wspt")) return {false, "train differs"};
  cli("index --pages " + p("test") + " --model " + p("model.wspt") + " --out " + p("index_again.wsix"));
  if (slurp(kWork / "index.wsix") != slurp(kWork / "index_again.wsix")) return {false, "index differs"};
  cli("search --index " + p("index.wsix") + " --query " + "witnet --k 25", kWork / "s1.txt");
  cli("search --index " + p("index_again.wsix") + " --query " + "witnet --k 25", kWork / "s2.txt");
  const auto first_line = [&] {
    const auto s = slurp(kWork / "s1.txt");
    return s.substr(0, s.find('\n'));
  }();
  if (slurp(kWork / "s1.txt") != slurp(kWork / "s2.txt")) return {false, "search differs"};
  const auto hit = json::parse(first_line);
  const auto b = hit["box"];
  const std::string qbe = hit["page_id"].get<std::string>() + ":" + std::to_string(b[0].get<long>()) + "," +
                          std::to_string(b[1].get<long>()) + "," + std::to_string(b[2].get<long>()) + "," +
                          std::to_string(b[3].get<long>());
  const std::string q = "search --index " + p("index.wsix") + " --model " + p("model.wspt") + " --qbe " + qbe;
  cli(q, kWork / "e1.txt");
  cli(q, kWork / "e2.txt");
  if (slurp(kWork / "e1.txt") != slurp(kWork / "e2.txt")) return {false, "qbe search differs"};
  return {true, "synth, train, index and search outputs byte-identical across two runs"};
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  throw std::runtime_error("expected an error");
}

Outcome persistence(bool have_e2e) {
  if (!have_e2e) return {false, "needs the end-to-end artifacts"};
  const auto model_bytes = read_file_bytes(kWork / "model.wspt");
  const auto model = deserialize_model(model_bytes);
  save_model(model, kWork / "model_copy.wspt");
  const auto again = load_model(kWork / "model_copy.wspt");
  std::mt19937_64 rng(107);
  const auto x = gradcheck::random_matrix(rng, 8, model.net.config().input_dim);
  bool ok = serialize_model(again) == model_bytes && again.net.infer(x).embeddings == model.net.infer(x).embeddings &&
            again.text.to_json() == model.text.to_json();

  const auto index = load_index(kWork / "index.wsix");
  save_index(index, kWork / "index_copy.wsix");
  ok = ok && load_index(kWork / "index_copy.wsix") == index &&
       read_file_bytes(kWork / "index_copy.wsix") == read_file_bytes(kWork / "index.wsix");

  auto index_bytes = serialize_index(index);
  auto cut = index_bytes;
  cut.resize(cut.size() - 3);
  auto flip = index_bytes;
  flip[flip.size() / 3] ^= 0x10;
  auto ver = index_bytes;
  ver[4] = 77;
  auto mcut = model_bytes;
  mcut.resize(mcut.size() / 2);
  auto mflip = model_bytes;
  mflip[mflip.size() / 3] ^= 0x10;
  auto mver = model_bytes;
  mver[4] = 77;
  ok = ok && code_of([&] { deserialize_index(cut); }) == ErrorCode::CorruptIndex &&
       code_of([&] { deserialize_index(flip); }) == ErrorCode::CorruptIndex &&
       code_of([&] { deserialize_index(ver); }) == ErrorCode::VersionMismatch &&
       code_of([&] { deserialize_model(mcut); }) == ErrorCode::CorruptModel &&
       code_of([&] { deserialize_model(mflip); }) == ErrorCode::CorruptModel &&
       code_of([&] { deserialize_model(mver); }) == ErrorCode::VersionMismatch;
  return {ok, "model and index round trip to deep equality; truncation, bit flips and version bumps rejected"};
}

}  // namespace

int main() {
  fs::remove_all(kWork);
  fs::create_directories(kWork);
  int failures = 0;
  auto report = [&](const std::string& name, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << ": " << o.detail << std::endl;
  };

  report("embedding dimensions", embedding_dims);
  report("embedding oracle equivalence", embedding_oracles);
  report("geometry oracles", geometry_oracles);
  report("anchor count", anchor_count);
  report("loss gradient suite", gradient_suite);
  report("weighted loss arithmetic", weighted_total);
  report("learning-rate schedule", lr_schedule);
  report("evaluation correctness", evaluation_correctness);
  bool have_e2e = false;
  report("synthetic end-to-end", [&] {
    auto r = synthetic_end_to_end();
    have_e2e = r.ran;
    return r.outcome;
  });
  report("determinism", [&] { return determinism(have_e2e); });
  report("persistence", [&] { return persistence(have_e2e); });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  fs::remove_all(kWork);
  return failures == 0 ? 0 : 1;
}
