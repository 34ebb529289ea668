#include "wordspot/training.hpp"

#include <algorithm>
#include <map>
#include <random>

#include "wordspot/errors.hpp"
#include "wordspot/evaluation.hpp"
#include "wordspot/losses.hpp"

namespace wordspot {

namespace {

Box scaled(const Box& b, double s) { return {b.x_c * s, b.y_c * s, b.w * s, b.h * s}; }

void append_features(const GrayImage& img, const Box& box, std::vector<double>& rows) {
  const auto f = extract_features(img, box);
  rows.insert(rows.end(), f.begin(), f.end());
}

}  // namespace

TrainingCorpus build_training_corpus(std::span<const AnnotatedPage> pages,
                                     const TextEmbedder& text, const CorpusOptions& opts) {
  opts.dtp.validate();
  opts.match.validate();
  TrainingCorpus corpus;
  std::vector<double> rows;
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  auto add = [&](const GrayImage& img, TrainingCrop crop) {
    append_features(img, crop.box, rows);
    (crop.is_word ? corpus.positives : corpus.negatives).push_back(corpus.crops.size());
    corpus.crops.push_back(std::move(crop));
  };

  for (std::size_t p = 0; p < pages.size(); ++p) {
    const auto working = resize_longest_side(pages[p].image, opts.working_size);
    const Bounds bounds{static_cast<double>(working.image.width), static_cast<double>(working.image.height)};

    std::vector<LabeledBox> gts;
    std::vector<long> instance_of;
    for (const auto& w : pages[p].words) {
      std::string label;
      try {
        label = text.normalize(w.label);
      } catch (const Error&) {
        label.clear();  // unreadable label: blocks negatives, trains nothing
      }
      gts.push_back({clamp_to(scaled(w.box, working.scale), bounds), label});
      instance_of.push_back(label.empty() ? -1 : static_cast<long>(corpus.instances++));
    }

    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (instance_of[g] < 0 || !gts[g].box.valid()) continue;
      add(working.image, {p, gts[g].box, gts[g].label, true, instance_of[g], true});
      const Box& b = gts[g].box;
      for (std::size_t j = 0; j < opts.jitter_per_gt; ++j) {
        for (int attempt = 0; attempt < 20; ++attempt) {
          const double sw = 1.0 + opts.jitter * unit(rng);
          const double sh = 1.0 + opts.jitter * unit(rng);
          Box c{b.x_c + opts.jitter * b.w * unit(rng), b.y_c + opts.jitter * b.h * unit(rng),
                b.w * sw, b.h * sh};
          c = clamp_to(c, bounds);
          if (c.valid() && iou(c, b) > opts.match.pos_iou) {
            add(working.image, {p, c, gts[g].label, true, instance_of[g], false});
            break;
          }
        }
      }
    }

    const auto proposals = dtp_proposals(working.image, opts.dtp);
    const auto labels = label_proposals(proposals, gts, opts.match);
    std::vector<std::size_t> negs;
    for (std::size_t i = 0; i < proposals.size(); ++i) {
      if (labels[i].label == MatchLabel::positive) {
        const auto g = labels[i].gt;
        if (instance_of[g] >= 0) {
          add(working.image, {p, proposals[i], gts[g].label, true, instance_of[g], false});
        }
      } else if (labels[i].label == MatchLabel::negative) {
        negs.push_back(i);
      }
    }
    if (negs.size() > opts.max_negatives_per_page) {
      std::shuffle(negs.begin(), negs.end(), rng);
      negs.resize(opts.max_negatives_per_page);
      std::sort(negs.begin(), negs.end());
    }
    for (auto i : negs) add(working.image, {p, proposals[i], {}, false, -1, false});
  }

  const auto d = static_cast<Eigen::Index>(kPatchWidth * kPatchHeight);
  corpus.features = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      rows.data(), static_cast<Eigen::Index>(corpus.crops.size()), d);
  return corpus;
}

double crop_qbs_map(const DenseNet& net, const TrainingCorpus& corpus, const TextEmbedder& text) {
  std::vector<std::size_t> gt;
  for (std::size_t i = 0; i < corpus.crops.size(); ++i) {
    if (corpus.crops[i].is_gt) gt.push_back(i);
  }
  if (gt.empty()) return 0.0;
  Matrix batch(static_cast<Eigen::Index>(gt.size()), corpus.features.cols());
  for (std::size_t r = 0; r < gt.size(); ++r) {
    batch.row(static_cast<Eigen::Index>(r)) = corpus.features.row(static_cast<Eigen::Index>(gt[r]));
  }
  const Matrix emb = net.infer(batch).embeddings;

  std::map<std::string, std::size_t> counts;
  for (auto i : gt) ++counts[corpus.crops[i].label];
  double total = 0.0;
  for (const auto& [label, r] : counts) {
    const auto q = text.embed(label).values;
    const Vector qv = Eigen::Map<const Vector>(q.data(), static_cast<Eigen::Index>(q.size())).normalized();
    const Vector sims = emb * qv;
    std::vector<std::size_t> order(gt.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return sims(static_cast<Eigen::Index>(a)) > sims(static_cast<Eigen::Index>(b));
    });
    std::vector<bool> rel(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) rel[k] = corpus.crops[gt[order[k]]].label == label;
    total += average_precision(rel, r);
  }
  return total / static_cast<double>(counts.size());
}

double wordness_auc(const DenseNet& net, const TrainingCorpus& corpus) {
  if (corpus.positives.empty() || corpus.negatives.empty()) return 0.0;
  const Vector s = net.infer(corpus.features).score_logits;
  std::vector<std::size_t> order(corpus.crops.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return s(static_cast<Eigen::Index>(a)) < s(static_cast<Eigen::Index>(b));
  });
  // Mann-Whitney statistic with average ranks for ties.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && s(static_cast<Eigen::Index>(order[j])) == s(static_cast<Eigen::Index>(order[i]))) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (corpus.crops[order[k]].is_word) rank_sum += avg;
    }
    i = j;
  }
  const double np = static_cast<double>(corpus.positives.size());
  const double nn = static_cast<double>(corpus.negatives.size());
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

TrainResult train(const TrainingCorpus& corpus, const TrainingCorpus* validation,
                  const TextEmbedder& text, const TrainConfig& cfg, const TrainProgress& progress) {
  if (corpus.positives.empty()) throw Error(ErrorCode::EmptyCorpus, "training corpus has no word crops");
  if (cfg.batch < 2) throw Error(ErrorCode::InvalidConfig, "batch size must be at least 2");
  if (cfg.loss.loss == EmbeddingLoss::bce && text.kind() != EmbeddingKind::phoc) {
    throw Error(ErrorCode::InvalidConfig, "bce loss needs binary phoc targets");
  }

  EmbedNetConfig net_cfg = cfg.net;
  net_cfg.input_dim = static_cast<int>(corpus.features.cols());
  net_cfg.out_dim = static_cast<int>(text.dim());
  net_cfg.sigmoid_output = cfg.loss.loss == EmbeddingLoss::bce;
  net_cfg.seed = cfg.seed;
  DenseNet net(net_cfg);
  net.set_mode(NetMode::train);
  Adam adam(cfg.adam);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  std::map<std::string, Vector> targets;
  for (auto i : corpus.positives) {
    const auto& label = corpus.crops[i].label;
    if (!targets.count(label)) {
      const auto e = text.embed(label).values;
      targets.emplace(label, Eigen::Map<const Vector>(e.data(), static_cast<Eigen::Index>(e.size())));
    }
  }

  const std::size_t n_neg = corpus.negatives.empty() ? 0 : cfg.batch / 2;
  const std::size_t n_pos = cfg.batch - n_neg;
  const auto n = static_cast<Eigen::Index>(cfg.batch);
  const auto d = static_cast<Eigen::Index>(text.dim());

  TrainResult result;
  std::optional<DenseNet> best;
  double best_map = -1.0;
  StepLosses last;

  auto validate = [&](long it) {
    ValidationPoint vp{it, 0.0, last};
    if (validation != nullptr) vp.map = crop_qbs_map(net, *validation, text);
    result.history.push_back(vp);
    if (progress) progress(vp);
    if (validation != nullptr && vp.map >= best_map) {
      best_map = vp.map;
      best = net;
      result.best_iteration = it;
    }
  };

  Matrix batch(n, corpus.features.cols());
  BatchTargets bt;
  bt.embedding = Matrix::Zero(n, d);
  bt.is_word.assign(cfg.batch, 0);
  bt.mismatch.assign(cfg.batch, -1);
  std::vector<Matrix> grads;

  for (long it = 1; it <= cfg.iterations; ++it) {
    std::vector<std::size_t> picks;
    for (std::size_t k = 0; k < n_pos; ++k) picks.push_back(corpus.positives[rng() % corpus.positives.size()]);
    for (std::size_t k = 0; k < n_neg; ++k) picks.push_back(corpus.negatives[rng() % corpus.negatives.size()]);
    for (std::size_t r = 0; r < picks.size(); ++r) {
      const auto row = static_cast<Eigen::Index>(r);
      const auto& crop = corpus.crops[picks[r]];
      batch.row(row) = corpus.features.row(static_cast<Eigen::Index>(picks[r]));
      bt.is_word[r] = crop.is_word ? 1 : 0;
      bt.mismatch[r] = -1;
      if (crop.is_word) {
        bt.embedding.row(row) = targets.at(crop.label).transpose();
      } else {
        bt.embedding.row(row).setZero();
      }
    }
    if (cfg.loss.loss == EmbeddingLoss::cosine_embedding) {
      // Pair every word with another in-batch word of a different label.
      const std::size_t start = n_pos > 0 ? rng() % n_pos : 0;
      for (std::size_t r = 0; r < n_pos; ++r) {
        for (std::size_t s = 0; s < n_pos; ++s) {
          const std::size_t o = (start + r + s) % n_pos;
          if (corpus.crops[picks[o]].label != corpus.crops[picks[r]].label) {
            bt.mismatch[r] = static_cast<int>(o);
            break;
          }
        }
      }
    }
    last = net.loss_and_gradients(batch, bt, cfg.loss, &grads);
    net.update_running_stats(net.trace(batch, NetMode::train));
    adam.step(net.parameters(), grads);
    if (cfg.val_every > 0 && it % cfg.val_every == 0) validate(it);
  }
  if (cfg.val_every <= 0 || cfg.iterations % cfg.val_every != 0 || cfg.iterations == 0) {
    validate(cfg.iterations);
  }

  if (best) net = *best;
  if (!best) result.best_iteration = cfg.iterations;
  result.best_map = std::max(best_map, 0.0);
  net.set_mode(NetMode::eval);
  net.round_to_float();
  result.model.net = std::move(net);
  result.model.text = text;
  result.model.loss = cfg.loss.loss;
  return result;
}

}  // namespace wordspot
