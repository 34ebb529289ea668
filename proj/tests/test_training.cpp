#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <map>

#include "wordspot/augmentation.hpp"
#include "wordspot/errors.hpp"
#include "wordspot/index.hpp"
#include "wordspot/training.hpp"

using namespace wordspot;
namespace fs = std::filesystem;

namespace {

SyntheticCorpusConfig corpus_config() {
  SyntheticCorpusConfig c;
  c.vocab_size = 20;
  c.pages = 10;
  c.words_per_page = 40;
  c.seed = 31;
  return c;
}

std::vector<AnnotatedPage> annotated(const std::vector<SyntheticPage>& pages, const std::string& prefix) {
  std::vector<AnnotatedPage> out;
  for (std::size_t i = 0; i < pages.size(); ++i) {
    out.push_back({prefix + std::to_string(i), pages[i].image, pages[i].words});
  }
  return out;
}

/// One trained model shared by the test cases below.
struct Trained {
  TextEmbedder text = TextEmbedder::make(EmbeddingKind::dctow);
  SyntheticCorpusConfig synth = corpus_config();
  std::vector<SyntheticPage> pages = generate_synthetic_corpus(synth);
  TrainingCorpus train_corpus;
  TrainingCorpus val_corpus;
  TrainResult result;

  Trained() {
    const auto all = annotated(pages, "p");
    const std::span<const AnnotatedPage> s(all);
    CorpusOptions opts;
    train_corpus = build_training_corpus(s.first(8), text, opts);
    val_corpus = build_training_corpus(s.last(2), text, opts);
    TrainConfig cfg;
    cfg.iterations = 3000;
    cfg.val_every = 1000;
    result = train(train_corpus, &val_corpus, text, cfg);
  }
};

const Trained& trained() {
  static const Trained t;
  return t;
}

}  // namespace

TEST_CASE("validation retrieval and wordness separate the synthetic classes") {
  const auto& t = trained();
  CHECK(t.result.history.size() == 3);
  CHECK(t.result.best_map >= 0.95);
  const double auc = wordness_auc(t.result.model.net, t.val_corpus);
  INFO("auc " << auc);
  CHECK(auc >= 0.98);
  CHECK(t.result.model.net.mode() == NetMode::eval);
}

TEST_CASE("a one-word page returns that word first") {
  const auto& t = trained();
  const std::string word = t.synth.resolved_vocabulary()[3];
  SyntheticCorpusConfig one = t.synth;
  one.vocabulary = {word};
  one.words_per_page = 1;
  one.seed = 77;
  const auto page = generate_synthetic_page(one, 0);
  REQUIRE(page.words.size() == 1);

  const auto dir = fs::temp_directory_path() / "wordspot_training_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_image(dir / "one.png", page.image);
  const std::vector<PageSource> src{{"one", dir / "one.png"}};
  const auto idx = build_index(src, t.result.model, IndexOptions{}).index;
  const auto hits = query_by_string(idx, word, 5);
  REQUIRE(!hits.empty());
  CHECK(iou(hits[0].box, page.words[0].box) > 0.5);
  CHECK(hits[0].similarity >= 0.95);
  fs::remove_all(dir);
}

TEST_CASE("query by example finds another instance of the word next") {
  const auto& t = trained();
  const auto dir = fs::temp_directory_path() / "wordspot_training_qbe";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::vector<PageSource> src;
  for (std::size_t i = 8; i < 10; ++i) {
    const auto name = "v" + std::to_string(i);
    write_image(dir / (name + ".png"), t.pages[i].image);
    src.push_back({name, dir / (name + ".png")});
  }
  const auto idx = build_index(src, t.result.model, IndexOptions{}).index;

  std::map<std::string, int> counts;
  for (std::size_t i = 8; i < 10; ++i)
    for (const auto& w : t.pages[i].words) ++counts[w.label];
  std::size_t tried = 0, correct = 0;
  for (const auto& w : t.pages[8].words) {
    if (counts[w.label] < 2) continue;
    const auto hits = query_by_example(idx, "v8", w.box, t.result.model, 10);
    // Skip the query's own region, then the best other hit should share its label.
    for (const auto& h : hits) {
      if (h.page_id == "v8" && iou(h.box, w.box) > 0.5) continue;
      const auto& page = t.pages[h.page_id == "v8" ? 8 : 9];
      for (const auto& g : page.words) {
        if (iou(g.box, h.box) > 0.5) correct += g.label == w.label ? 1 : 0;
      }
      break;
    }
    ++tried;
  }
  REQUIRE(tried > 10);
  INFO(correct << " of " << tried);
  CHECK(static_cast<double>(correct) / static_cast<double>(tried) >= 0.9);
  fs::remove_all(dir);
}

TEST_CASE("training is deterministic and validates its inputs") {
  const auto text = TextEmbedder::make(EmbeddingKind::dctow);
  SyntheticCorpusConfig c = corpus_config();
  c.pages = 2;
  const auto pages = annotated(generate_synthetic_corpus(c), "q");
  const auto corpus = build_training_corpus(pages, text, CorpusOptions{});
  CHECK(!corpus.positives.empty());
  CHECK(!corpus.negatives.empty());
  TrainConfig cfg;
  cfg.iterations = 40;
  cfg.net.hidden_dims = {32};
  const auto a = serialize_model(train(corpus, nullptr, text, cfg).model);
  const auto b = serialize_model(train(corpus, nullptr, text, cfg).model);
  CHECK(a == b);

  cfg.loss.loss = EmbeddingLoss::bce;
  CHECK_THROWS_AS(train(corpus, nullptr, text, cfg), Error);
  TrainingCorpus empty;
  cfg.loss.loss = EmbeddingLoss::cosine;
  CHECK_THROWS_AS(train(empty, nullptr, text, cfg), Error);
}

TEST_CASE("corpus crops are labelled consistently with their gt") {
  const auto text = TextEmbedder::make(EmbeddingKind::dctow);
  SyntheticCorpusConfig c = corpus_config();
  c.pages = 1;
  const auto synth = generate_synthetic_corpus(c);
  const auto pages = annotated(synth, "r");
  const auto corpus = build_training_corpus(pages, text, CorpusOptions{});
  CHECK(corpus.features.rows() == static_cast<Eigen::Index>(corpus.size()));
  CHECK(corpus.instances == synth[0].words.size());
  std::size_t gt_crops = 0;
  for (auto i : corpus.positives) {
    const auto& crop = corpus.crops[i];
    REQUIRE(crop.instance >= 0);
    const auto& w = synth[0].words[static_cast<std::size_t>(crop.instance)];
    CHECK(crop.label == text.normalize(w.label));
    CHECK(iou(crop.box, w.box) > 0.75);
    gt_crops += crop.is_gt ? 1 : 0;
  }
  CHECK(gt_crops == synth[0].words.size());
  for (auto i : corpus.negatives) {
    for (const auto& w : synth[0].words) CHECK(iou(corpus.crops[i].box, w.box) < 0.4);
  }
}
