#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wordspot/dtp.hpp"
#include "wordspot/embedder.hpp"
#include "wordspot/geometry.hpp"
#include "wordspot/image.hpp"
#include "wordspot/text_embeddings.hpp"

namespace wordspot {

struct AnnotatedPage {
  std::string page_id;
  GrayImage image;
  std::vector<LabeledBox> words;  // page pixels, raw labels
};

struct TrainingCrop {
  std::size_t page = 0;
  Box box;            // working-resolution pixels
  std::string label;  // normalized; empty for background
  bool is_word = false;
  long instance = -1;  // gt word this crop was derived from
  bool is_gt = false;  // the annotated box itself
};

/// Crops with precomputed patch features (one row per crop).
struct TrainingCorpus {
  std::vector<TrainingCrop> crops;
  Matrix features;
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
  std::size_t instances = 0;

  std::size_t size() const { return crops.size(); }
};

struct CorpusOptions {
  DtpConfig dtp;
  int working_size = 1720;
  MatchConfig match;                     // pos_iou / neg_iou for proposals
  std::size_t max_negatives_per_page = 600;
  std::size_t jitter_per_gt = 4;         // extra shifted copies of each gt box
  double jitter = 0.08;                  // max shift, fraction of box size
  std::uint64_t seed = 0;
};

/// Labels DTP proposals against the gt words: proposals above pos_iou
/// inherit the label of their best gt, those below neg_iou become
/// background. The gt boxes themselves and jittered copies are added as
/// positives. Pages are resized to the working size first.
TrainingCorpus build_training_corpus(std::span<const AnnotatedPage> pages,
                                     const TextEmbedder& text, const CorpusOptions& opts);

struct TrainConfig {
  EmbedNetConfig net;  // out_dim and sigmoid_output are set from the text embedding and loss
  AdamConfig adam;
  LossSpec loss;
  long iterations = 5000;
  std::size_t batch = 64;  // half words, half background
  long val_every = 1000;
  std::uint64_t seed = 0;
};

struct ValidationPoint {
  long iteration = 0;
  double map = 0.0;
  StepLosses losses;
};

struct TrainResult {
  TrainedModel model;  // best validation checkpoint, float-rounded
  std::vector<ValidationPoint> history;
  long best_iteration = 0;
  double best_map = 0.0;
};

using TrainProgress = std::function<void(const ValidationPoint&)>;

/// Mini-batch ADAM training. Every `val_every` iterations (and at the end)
/// the net is scored by crop-level QbS MAP on `validation` and the best
/// state is kept. Without validation crops the last state is returned.
TrainResult train(const TrainingCorpus& corpus, const TrainingCorpus* validation,
                  const TextEmbedder& text, const TrainConfig& cfg,
                  const TrainProgress& progress = {});

/// QbS MAP over the gt-derived word crops of a corpus: each unique label
/// ranks every word crop by cosine similarity to its text embedding.
double crop_qbs_map(const DenseNet& net, const TrainingCorpus& corpus, const TextEmbedder& text);

/// Area under the ROC curve of the wordness head on a corpus.
double wordness_auc(const DenseNet& net, const TrainingCorpus& corpus);

}  // namespace wordspot
