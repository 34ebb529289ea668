#include "wordspot/text_embeddings.hpp"

#include <cctype>
#include <cmath>
#include <numbers>
#include <numeric>


#include "wordspot/errors.hpp"

namespace wordspot {

Alphabet::Alphabet() : Alphabet("0123456789abcdefghijklmnopqrstuvwxyz") {}

Alphabet::Alphabet(std::string_view symbols) : symbols_(symbols) {
  index_.fill(-1);
  if (symbols_.empty()) {
    throw Error(ErrorCode::InvalidConfig, "alphabet must not be empty");
  }
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    auto& slot = index_[static_cast<unsigned char>(symbols_[i])];
    if (slot >= 0) {
      throw Error(ErrorCode::InvalidConfig,
                  std::string("duplicate alphabet symbol '") + symbols_[i] + "'");
    }
    slot = static_cast<int>(i);
  }
}

std::size_t PhocConfig::dim() const {
  std::size_t regions = 0;
  for (int level : levels) regions += static_cast<std::size_t>(level);
  return regions * alphabet.size();
}

std::string_view to_string(EmbeddingKind kind) {
  switch (kind) {
    case EmbeddingKind::phoc: return "phoc";
    case EmbeddingKind::dctow: return "dctow";
    case EmbeddingKind::learned: return "learned";
  }
  return "learned";
}

EmbeddingKind embedding_kind_from_string(std::string_view name) {
  if (name == "phoc") return EmbeddingKind::phoc;
  if (name == "dctow") return EmbeddingKind::dctow;
  if (name == "learned") return EmbeddingKind::learned;
  throw Error(ErrorCode::InvalidConfig, "unknown embedding kind '" + std::string(name) + "'");
}

std::string normalize_label(std::string_view raw, const Alphabet& alphabet) {
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    const char lower = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (alphabet.contains(lower)) out.push_back(lower);
  }
  if (out.empty()) {
    throw Error(ErrorCode::EmptyLabel, "label '" + std::string(raw) + "' has no alphabet symbols");
  }
  return out;
}

namespace {

void require_encodable(std::string_view word, const Alphabet& alphabet) {
  if (word.empty()) throw Error(ErrorCode::EmptyLabel, "cannot embed an empty word");
  for (char c : word) {
    if (!alphabet.contains(c)) {
      throw Error(ErrorCode::EmptyLabel,
                  "word '" + std::string(word) + "' is not normalized for this alphabet");
    }
  }
}

}  // namespace

EmbeddingVector phoc(std::string_view word, const PhocConfig& cfg) {
  require_encodable(word, cfg.alphabet);
  const auto K = cfg.alphabet.size();
  const long m = static_cast<long>(word.size());

  EmbeddingVector out;
  out.kind = EmbeddingKind::phoc;
  out.values.assign(cfg.dim(), 0.0);

  // Scaled by m*level, character k spans [k*level, (k+1)*level) and region r
  // spans [r*m, (r+1)*m); the half-occupancy test stays in integers.
  std::size_t region_offset = 0;
  for (int level_int : cfg.levels) {
    const long level = level_int;
    for (long r = 0; r < level; ++r) {
      for (long k = 0; k < m; ++k) {
        const long lo = std::max(k * level, r * m);
        const long hi = std::min((k + 1) * level, (r + 1) * m);
        if (2 * (hi - lo) >= level) {
          const auto channel = static_cast<std::size_t>(cfg.alphabet.lookup(word[k]));
          out.values[(region_offset + static_cast<std::size_t>(r)) * K + channel] = 1.0;
        }
      }
    }
    region_offset += static_cast<std::size_t>(level);
  }
  return out;
}

EmbeddingVector dctow(std::string_view word, const DctowConfig& cfg) {
  require_encodable(word, cfg.alphabet);
  const auto K = cfg.alphabet.size();
  const auto m = word.size();
  const double md = static_cast<double>(m);

  EmbeddingVector out;
  out.kind = EmbeddingKind::dctow;
  out.values.assign(cfg.dim(), 0.0);

  const auto kept = std::min<std::size_t>(static_cast<std::size_t>(cfg.r), m);
  for (std::size_t k = 0; k < kept; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / md) : std::sqrt(2.0 / md);
    for (std::size_t n = 0; n < m; ++n) {
      const auto channel = static_cast<std::size_t>(cfg.alphabet.lookup(word[n]));
      const double basis =
          std::cos(std::numbers::pi / md * (static_cast<double>(n) + 0.5) * static_cast<double>(k));
      out.values[k * K + channel] += scale * basis;
    }
  }
  return out;
}

TextEmbedder::TextEmbedder(EmbeddingKind kind, PhocConfig phoc_cfg, DctowConfig dctow_cfg)
    : kind_(kind), phoc_(std::move(phoc_cfg)), dctow_(std::move(dctow_cfg)) {
  if (kind_ == EmbeddingKind::learned) {
    throw Error(ErrorCode::InvalidConfig, "text embedder must be phoc or dctow");
  }
}

TextEmbedder TextEmbedder::make(EmbeddingKind kind) { return TextEmbedder(kind, {}, {}); }

std::size_t TextEmbedder::dim() const {
  return kind_ == EmbeddingKind::phoc ? phoc_.dim() : dctow_.dim();
}

const Alphabet& TextEmbedder::alphabet() const {
  return kind_ == EmbeddingKind::phoc ? phoc_.alphabet : dctow_.alphabet;
}

EmbeddingVector TextEmbedder::embed(std::string_view raw) const {
  const auto word = normalize(raw);
  return kind_ == EmbeddingKind::phoc ? phoc(word, phoc_) : dctow(word, dctow_);
}

nlohmann::json TextEmbedder::to_json() const {
  nlohmann::json j;
  j["kind"] = std::string(to_string(kind_));
  if (kind_ == EmbeddingKind::phoc) {
    j["alphabet"] = phoc_.alphabet.symbols();
    j["levels"] = phoc_.levels;
  } else {
    j["alphabet"] = dctow_.alphabet.symbols();
    j["r"] = dctow_.r;
  }
  return j;
}

TextEmbedder TextEmbedder::from_json(const nlohmann::json& j) {
  const auto kind = embedding_kind_from_string(j.at("kind").get<std::string>());
  const Alphabet alphabet(j.at("alphabet").get<std::string>());
  PhocConfig p;
  DctowConfig d;
  p.alphabet = alphabet;
  d.alphabet = alphabet;
  if (kind == EmbeddingKind::phoc) {
    p.levels = j.at("levels").get<std::vector<int>>();
    for (int level : p.levels) {
      if (level <= 0) throw Error(ErrorCode::InvalidConfig, "phoc levels must be positive");
    }
  } else {
    d.r = j.at("r").get<int>();
    if (d.r <= 0) throw Error(ErrorCode::InvalidConfig, "dctow r must be positive");
  }
  return TextEmbedder(kind, std::move(p), std::move(d));
}

}  // namespace wordspot
