#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "wordspot/augmentation.hpp"
#include "wordspot/dtp.hpp"
#include "wordspot/embedder.hpp"
#include "wordspot/evaluation.hpp"
#include "wordspot/index.hpp"
#include "wordspot/text_embeddings.hpp"
#include "wordspot/training.hpp"

namespace wordspot {

struct PathsConfig {
  std::string corpus = "corpus";
  std::string model = "model.wspt";
  std::string index = "index.wsix";
};

struct TrainSettings {
  EmbeddingLoss loss = EmbeddingLoss::cosine;
  long iterations = 5000;
  std::size_t batch = 64;
  long val_every = 1000;
  double val_fraction = 0.1;  // of the corpus pages, taken from the end
  std::vector<int> hidden_dims{256, 256};
  double lr = 1e-3;
  long decay_every = 10000;
  double margin = 0.2;
  std::size_t max_negatives_per_page = 600;
  std::size_t jitter_per_gt = 4;
  double jitter = 0.08;
  std::uint64_t seed = 0;
};

/// The whole pipeline configuration as one JSON document.
struct ProjectConfig {
  PathsConfig paths;
  EmbeddingKind embedding = EmbeddingKind::dctow;
  int working_size = 1720;
  DtpConfig dtp;
  QueryConfig query;
  EvalConfig eval;
  TrainSettings train;
  SyntheticCorpusConfig synth;

  void validate() const;
  /// Every field, defaults included.
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static ProjectConfig from_json(const nlohmann::json& j);

  TrainConfig train_config() const;
  CorpusOptions corpus_options() const;
  IndexOptions index_options() const;
};

nlohmann::json dtp_to_json(const DtpConfig& c);
DtpConfig dtp_from_json(const nlohmann::json& j);

/// Reads a config file; a missing path yields the defaults.
ProjectConfig load_config(const std::optional<std::filesystem::path>& path);
void save_config(const ProjectConfig& cfg, const std::filesystem::path& path);

/// An explicit path wins, then $WORDSPOT_CONFIG, then none.
std::optional<std::filesystem::path> resolve_config_path(const std::optional<std::string>& explicit_path);

}  // namespace wordspot
