#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "wordspot/geometry.hpp"
#include "wordspot/image.hpp"
#include "wordspot/text_embeddings.hpp"

namespace wordspot {

struct AugmentConfig {
  double shear_range = 12.0;          // degrees, uniform in [-range, range]
  std::vector<int> morph_sizes{1, 3, 5};  // square elements; 1 is identity
  double noise_sigma = 4.0;
  double background_interval = 10.0;  // +- around the median
  /// Background centre for full pages; the median of the word bank if unset.
  std::optional<int> background_median;
  int row_gap = 12;
  int word_gap = 16;
  int margin = 24;
  std::size_t max_words = 0;  // 0: fill the page
  int ink_delta = 32;         // ink is darker than the paper level by this much
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static AugmentConfig from_json(const nlohmann::json& j);
};

/// Intensity of the 90th percentile pixel, taken as the paper colour.
std::uint8_t paper_level(const GrayImage& img);

/// Random shear followed by a random grayscale dilation or erosion; the
/// output keeps the input size.
GrayImage augment_word(const GrayImage& crop, const AugmentConfig& cfg, std::mt19937_64& rng);

/// Replaces the pixels inside every gt box with an augmented version of
/// themselves. Layout and boxes are unchanged.
GrayImage augment_in_place(const GrayImage& page, std::span<const LabeledBox> gts,
                           const AugmentConfig& cfg);

struct WordSample {
  GrayImage image;
  std::string label;
};

struct SyntheticPage {
  GrayImage image;
  std::vector<LabeledBox> words;
};

/// Background canvas with words sampled uniformly by class, augmented,
/// trimmed to their ink and laid out left-aligned row by row.
SyntheticPage augment_full_page(std::span<const WordSample> bank, int canvas_w, int canvas_h,
                                const AugmentConfig& cfg);

/// 5 x 3 cell pattern for a symbol, rows top to bottom, '#' for ink.
const std::array<const char*, 5>& glyph_pattern(char symbol);

/// Glyphs side by side with one blank cell column between them, each cell
/// `scale` pixels; ink and paper intensities as given.
GrayImage render_word(std::string_view word, int scale, std::uint8_t ink = 40,
                      std::uint8_t paper = 255);

/// Layout defaults for glyph pages: gaps wider than the widest proposal
/// kernel, no 5 px morphology (it would erase 4 px strokes), grey paper.
AugmentConfig synthetic_augment_defaults();

struct SyntheticCorpusConfig {
  /// Explicit words; when empty, `vocab_size` random words are drawn from
  /// the default alphabet with the corpus seed.
  std::vector<std::string> vocabulary;
  std::size_t vocab_size = 50;
  std::size_t min_len = 3;
  std::size_t max_len = 8;
  std::uint64_t vocab_seed = 0;  // drawing the vocabulary; independent of page seeds
  int glyph_scale = 4;
  std::size_t pages = 25;
  std::size_t words_per_page = 60;
  int canvas_width = 1720;
  int canvas_height = 600;
  AugmentConfig augment = synthetic_augment_defaults();  // seed unused; pages use seed + index
  std::uint64_t seed = 0;

  std::vector<std::string> resolved_vocabulary() const;
  void validate() const;
  nlohmann::json to_json() const;
  static SyntheticCorpusConfig from_json(const nlohmann::json& j);
};

/// `count` distinct random words over the alphabet with lengths in
/// [min_len, max_len].
std::vector<std::string> random_vocabulary(std::size_t count, std::size_t min_len,
                                           std::size_t max_len, const Alphabet& alphabet,
                                           std::uint64_t seed);

/// Page i is laid out with seed `cfg.seed + i`, so pages are independent.
SyntheticPage generate_synthetic_page(const SyntheticCorpusConfig& cfg, std::size_t index);
std::vector<SyntheticPage> generate_synthetic_corpus(const SyntheticCorpusConfig& cfg);

// Ground-truth sidecar: {"page": file, "words": [{"x","y","w","h","label"}]}
// with corner-form integer boxes.
struct GroundTruthFile {
  std::string page;
  std::vector<LabeledBox> words;
};

nlohmann::json ground_truth_to_json(const GroundTruthFile& gt);
GroundTruthFile ground_truth_from_json(const nlohmann::json& j);
void write_ground_truth(const std::filesystem::path& path, const GroundTruthFile& gt);
GroundTruthFile read_ground_truth(const std::filesystem::path& path);

struct DatasetEntry {
  std::string page_id;  // image file stem
  std::filesystem::path image;
  std::optional<std::filesystem::path> ground_truth;  // <stem>.json next to the image
};

/// Page images (.png, .pgm) in a directory, sorted by page id.
std::vector<DatasetEntry> list_dataset(const std::filesystem::path& dir);

}  // namespace wordspot
