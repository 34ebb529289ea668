#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace wordspot {

/// Ordered symbol set; a symbol's position is its channel in every embedding.
class Alphabet {
 public:
  /// Digits 0-9 followed by lowercase a-z.
  Alphabet();
  explicit Alphabet(std::string_view symbols);

  std::size_t size() const noexcept { return symbols_.size(); }
  const std::string& symbols() const noexcept { return symbols_; }

  /// Channel index of `c`, or -1 when the symbol is not in the alphabet.
  int lookup(char c) const noexcept { return index_[static_cast<unsigned char>(c)]; }
  bool contains(char c) const noexcept { return lookup(c) >= 0; }

  bool operator==(const Alphabet& other) const { return symbols_ == other.symbols_; }

 private:
  std::string symbols_;
  std::array<int, 256> index_{};
};

struct PhocConfig {
  std::vector<int> levels{1, 2, 3, 4, 5};
  Alphabet alphabet;

  std::size_t dim() const;
};

struct DctowConfig {
  int r = 3;  // retained frequency components per channel
  Alphabet alphabet;

  std::size_t dim() const { return static_cast<std::size_t>(r) * alphabet.size(); }
};

enum class EmbeddingKind { phoc, dctow, learned };

std::string_view to_string(EmbeddingKind kind);
EmbeddingKind embedding_kind_from_string(std::string_view name);

struct EmbeddingVector {
  std::vector<double> values;
  EmbeddingKind kind = EmbeddingKind::learned;

  std::size_t dim() const noexcept { return values.size(); }
};

/// Lowercases and drops every symbol outside the alphabet.
/// Throws Error(EmptyLabel) when nothing survives.
std::string normalize_label(std::string_view raw, const Alphabet& alphabet);

/// Pyramidal histogram of characters. Character k of an m-character word
/// spans [k/m, (k+1)/m) and is assigned to region r of level l when at least
/// half of that span lies inside [r/l, (r+1)/l). Layout is level-major, then
/// region, then channel.
EmbeddingVector phoc(std::string_view word, const PhocConfig& cfg);

/// Orthonormal DCT-II of the m x K one-hot matrix along the word axis, first
/// r coefficients kept (zero padded when m < r), laid out frequency-major.
EmbeddingVector dctow(std::string_view word, const DctowConfig& cfg);

/// Text side of the shared embedding space: normalizes a raw query and encodes
/// it with whichever embedding the model was trained against.
class TextEmbedder {
 public:
  TextEmbedder() = default;
  TextEmbedder(EmbeddingKind kind, PhocConfig phoc_cfg, DctowConfig dctow_cfg);

  static TextEmbedder make(EmbeddingKind kind);

  EmbeddingKind kind() const noexcept { return kind_; }
  std::size_t dim() const;
  const Alphabet& alphabet() const;
  const PhocConfig& phoc_config() const noexcept { return phoc_; }
  const DctowConfig& dctow_config() const noexcept { return dctow_; }

  std::string normalize(std::string_view raw) const { return normalize_label(raw, alphabet()); }
  EmbeddingVector embed(std::string_view raw) const;

  nlohmann::json to_json() const;
  static TextEmbedder from_json(const nlohmann::json& j);

 private:
  EmbeddingKind kind_ = EmbeddingKind::dctow;
  PhocConfig phoc_;
  DctowConfig dctow_;
};

}  // namespace wordspot
