#include "wordspot/augmentation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "wordspot/errors.hpp"

namespace wordspot {

void AugmentConfig::validate() const {
  if (shear_range < 0.0 || shear_range >= 60.0) {
    throw Error(ErrorCode::InvalidConfig, "shear_range must lie in [0, 60)");
  }
  if (morph_sizes.empty()) throw Error(ErrorCode::InvalidConfig, "morph_sizes must not be empty");
  for (int s : morph_sizes) {
    if (s < 1 || s % 2 == 0) throw Error(ErrorCode::InvalidConfig, "morph sizes must be odd and positive");
  }
  if (noise_sigma < 0.0 || background_interval < 0.0 || row_gap < 0 || word_gap < 0 || margin < 0 ||
      ink_delta < 0) {
    throw Error(ErrorCode::InvalidConfig, "augmentation ranges must be non-negative");
  }
  if (background_median && (*background_median < 0 || *background_median > 255)) {
    throw Error(ErrorCode::InvalidConfig, "background_median must lie in [0, 255]");
  }
}

nlohmann::json AugmentConfig::to_json() const {
  nlohmann::json j = {{"shear_range", shear_range},
                      {"morph_sizes", morph_sizes},
                      {"noise_sigma", noise_sigma},
                      {"background_interval", background_interval},
                      {"background_median", nullptr},
                      {"row_gap", row_gap},
                      {"word_gap", word_gap},
                      {"margin", margin},
                      {"max_words", max_words},
                      {"ink_delta", ink_delta},
                      {"seed", seed}};
  if (background_median) j["background_median"] = *background_median;
  return j;
}

AugmentConfig AugmentConfig::from_json(const nlohmann::json& j) {
  AugmentConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "shear_range") c.shear_range = v.get<double>();
    else if (key == "morph_sizes") c.morph_sizes = v.get<std::vector<int>>();
    else if (key == "noise_sigma") c.noise_sigma = v.get<double>();
    else if (key == "background_interval") c.background_interval = v.get<double>();
    else if (key == "background_median") c.background_median = v.is_null() ? std::nullopt : std::optional<int>(v.get<int>());
    else if (key == "row_gap") c.row_gap = v.get<int>();
    else if (key == "word_gap") c.word_gap = v.get<int>();
    else if (key == "margin") c.margin = v.get<int>();
    else if (key == "max_words") c.max_words = v.get<std::size_t>();
    else if (key == "ink_delta") c.ink_delta = v.get<int>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else throw Error(ErrorCode::InvalidConfig, "unknown augmentation key '" + key + "'");
  }
  c.validate();
  return c;
}

std::uint8_t paper_level(const GrayImage& img) {
  if (img.empty()) return 255;
  std::array<std::size_t, 256> hist{};
  for (auto p : img.pixels) ++hist[p];
  const std::size_t rank = (img.pixels.size() * 9) / 10;
  std::size_t acc = 0;
  for (int v = 0; v < 256; ++v) {
    acc += hist[static_cast<std::size_t>(v)];
    if (acc > rank) return static_cast<std::uint8_t>(v);
  }
  return 255;
}

GrayImage augment_word(const GrayImage& crop, const AugmentConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> angle(-cfg.shear_range, cfg.shear_range);
  const double theta = cfg.shear_range > 0.0 ? angle(rng) : 0.0;
  const int size = cfg.morph_sizes[rng() % cfg.morph_sizes.size()];
  const bool dilate = (rng() & 1U) != 0;
  GrayImage out = theta != 0.0 ? shear(crop, theta, paper_level(crop)) : crop;
  if (size > 1) {
    const StructuringElement se{size, size};
    out = dilate ? gray_dilate(out, se) : gray_erode(out, se);
  }
  return out;
}

GrayImage augment_in_place(const GrayImage& page, std::span<const LabeledBox> gts,
                           const AugmentConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  GrayImage out = page;
  for (const auto& g : gts) {
    // Whole pixels lying inside the box.
    const int x0 = std::max(0, static_cast<int>(std::ceil(g.box.x0())));
    const int y0 = std::max(0, static_cast<int>(std::ceil(g.box.y0())));
    const int x1 = std::min(page.width, static_cast<int>(std::floor(g.box.x1())));
    const int y1 = std::min(page.height, static_cast<int>(std::floor(g.box.y1())));
    if (x1 <= x0 || y1 <= y0) continue;
    const auto region = crop(out, x0, y0, x1 - x0, y1 - y0);
    auto aug = augment_word(region, cfg, rng);
    if (aug.width != region.width || aug.height != region.height) {
      aug = resize_bilinear(aug, region.width, region.height);
    }
    paste(out, aug, x0, y0);
  }
  return out;
}

namespace {

std::uint8_t bank_median(std::span<const WordSample> bank) {
  std::array<std::size_t, 256> hist{};
  std::size_t total = 0;
  for (const auto& w : bank) {
    for (auto p : w.image.pixels) ++hist[p];
    total += w.image.pixels.size();
  }
  std::size_t acc = 0;
  for (int v = 0; v < 256; ++v) {
    acc += hist[static_cast<std::size_t>(v)];
    if (2 * acc >= total) return static_cast<std::uint8_t>(v);
  }
  return 255;
}

/// Tight box of pixels darker than the paper level by `delta`; the whole
/// crop when there is no such pixel.
std::array<int, 4> ink_bounds(const GrayImage& img, int delta) {
  const int cut = static_cast<int>(paper_level(img)) - delta;
  int x0 = img.width, y0 = img.height, x1 = -1, y1 = -1;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (img.at(x, y) < cut) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
    }
  }
  if (x1 < 0) return {0, 0, img.width, img.height};
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

GrayImage pad_with(const GrayImage& img, int px, int py, std::uint8_t fill) {
  GrayImage out(img.width + 2 * px, img.height + 2 * py, fill);
  paste(out, img, px, py);
  return out;
}

}  // namespace

SyntheticPage augment_full_page(std::span<const WordSample> bank, int canvas_w, int canvas_h,
                                const AugmentConfig& cfg) {
  cfg.validate();
  if (bank.empty()) throw Error(ErrorCode::EmptyCorpus, "word bank is empty");
  const int usable_w = canvas_w - 2 * cfg.margin;
  const int usable_h = canvas_h - 2 * cfg.margin;
  for (const auto& w : bank) {
    if (w.image.width > usable_w || w.image.height > usable_h) {
      throw Error(ErrorCode::WordTooLarge, "word '" + w.label + "' does not fit inside the canvas margins");
    }
  }

  std::map<std::string, std::vector<std::size_t>> classes;
  for (std::size_t i = 0; i < bank.size(); ++i) classes[bank[i].label].push_back(i);
  std::vector<const std::vector<std::size_t>*> class_list;
  for (const auto& [label, members] : classes) class_list.push_back(&members);

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> offset(-cfg.background_interval, cfg.background_interval);
  const double centre = cfg.background_median ? *cfg.background_median : bank_median(bank);
  const auto bg = static_cast<std::uint8_t>(std::clamp(std::lround(centre + offset(rng)), 0L, 255L));

  SyntheticPage page;
  page.image = GrayImage(canvas_w, canvas_h, bg);
  int x = cfg.margin;
  int y = cfg.margin;
  int row_h = 0;
  const double max_tan = std::tan(cfg.shear_range * 3.14159265358979323846 / 180.0);
  for (;;) {
    if (cfg.max_words > 0 && page.words.size() >= cfg.max_words) break;
    const auto& members = *class_list[rng() % class_list.size()];
    const auto& sample = bank[members[rng() % members.size()]];

    // Room for the shear and the morphology so no ink is clipped.
    const int grow = *std::max_element(cfg.morph_sizes.begin(), cfg.morph_sizes.end());
    const int px = static_cast<int>(std::ceil(max_tan * sample.image.height / 2.0)) + grow;
    const auto padded = pad_with(sample.image, px, grow, paper_level(sample.image));
    const auto aug = augment_word(padded, cfg, rng);
    const auto b = ink_bounds(aug, cfg.ink_delta);
    auto word = crop(aug, b[0], b[1], b[2], b[3]);
    if (word.width > usable_w) word = crop(word, 0, 0, usable_w, word.height);

    if (x + word.width > canvas_w - cfg.margin) {
      x = cfg.margin;
      y += row_h + cfg.row_gap;
      row_h = 0;
    }
    if (y + word.height > canvas_h - cfg.margin) break;

    for (int r = 0; r < word.height; ++r) {
      for (int c = 0; c < word.width; ++c) {
        auto& dst = page.image.at(x + c, y + r);
        dst = std::min(dst, word.at(c, r));
      }
    }
    page.words.push_back({Box::from_xywh(x, y, word.width, word.height), sample.label});
    x += word.width + cfg.word_gap;
    row_h = std::max(row_h, word.height);
  }

  if (cfg.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    for (auto& p : page.image.pixels) {
      p = static_cast<std::uint8_t>(std::clamp(std::lround(p + noise(rng)), 0L, 255L));
    }
  }
  return page;
}

namespace {

using Glyph = std::array<const char*, 5>;

const std::map<char, Glyph>& font() {
  static const std::map<char, Glyph> f = {
      {'0', {"###", "#.#", "#.#", "#.#", "###"}}, {'1', {".#.", "##.", ".#.", ".#.", "###"}},
      {'2', {"###", "..#", "###", "#..", "###"}}, {'3', {"###", "..#", "###", "..#", "###"}},
      {'4', {"#.#", "#.#", "###", "..#", "..#"}}, {'5', {"###", "#..", "###", "..#", "###"}},
      {'6', {"###", "#..", "###", "#.#", "###"}}, {'7', {"###", "..#", ".#.", ".#.", ".#."}},
      {'8', {"###", "#.#", "###", "#.#", "###"}}, {'9', {"###", "#.#", "###", "..#", "###"}},
      {'a', {".#.", "#.#", "###", "#.#", "#.#"}}, {'b', {"##.", "#.#", "##.", "#.#", "##."}},
      {'c', {".##", "#..", "#..", "#..", ".##"}}, {'d', {"##.", "#.#", "#.#", "#.#", "##."}},
      {'e', {"###", "#..", "##.", "#..", "###"}}, {'f', {"###", "#..", "##.", "#..", "#.."}},
      {'g', {".##", "#..", "#.#", "#.#", ".##"}}, {'h', {"#.#", "#.#", "###", "#.#", "#.#"}},
      {'i', {"###", ".#.", ".#.", ".#.", "###"}}, {'j', {"..#", "..#", "..#", "#.#", ".#."}},
      {'k', {"#.#", "#.#", "##.", "#.#", "#.#"}}, {'l', {"#..", "#..", "#..", "#..", "###"}},
      {'m', {"#.#", "###", "###", "#.#", "#.#"}}, {'n', {"##.", "#.#", "#.#", "#.#", "#.#"}},
      {'o', {".#.", "#.#", "#.#", "#.#", ".#."}}, {'p', {"##.", "#.#", "##.", "#..", "#.."}},
      {'q', {".#.", "#.#", "#.#", "##.", ".##"}}, {'r', {"##.", "#.#", "##.", "#.#", "#.#"}},
      {'s', {".##", "#..", ".#.", "..#", "##."}}, {'t', {"###", ".#.", ".#.", ".#.", ".#."}},
      {'u', {"#.#", "#.#", "#.#", "#.#", "###"}}, {'v', {"#.#", "#.#", "#.#", "#.#", ".#."}},
      {'w', {"#.#", "#.#", "###", "###", "#.#"}}, {'x', {"#.#", "#.#", ".#.", "#.#", "#.#"}},
      {'y', {"#.#", "#.#", ".#.", ".#.", ".#."}}, {'z', {"###", "..#", ".#.", "#..", "###"}},
  };
  return f;
}

}  // namespace

const std::array<const char*, 5>& glyph_pattern(char symbol) {
  const auto& f = font();
  auto it = f.find(symbol);
  if (it == f.end()) {
    throw Error(ErrorCode::InvalidConfig, std::string("no glyph for symbol '") + symbol + "'");
  }
  return it->second;
}

GrayImage render_word(std::string_view word, int scale, std::uint8_t ink, std::uint8_t paper) {
  if (word.empty()) throw Error(ErrorCode::EmptyLabel, "cannot render an empty word");
  if (scale < 1) throw Error(ErrorCode::InvalidConfig, "glyph scale must be positive");
  const int n = static_cast<int>(word.size());
  GrayImage img(scale * (4 * n - 1), scale * 5, paper);
  for (int k = 0; k < n; ++k) {
    const auto& g = glyph_pattern(word[static_cast<std::size_t>(k)]);
    for (int r = 0; r < 5; ++r) {
      for (int c = 0; c < 3; ++c) {
        if (g[static_cast<std::size_t>(r)][c] != '#') continue;
        for (int dy = 0; dy < scale; ++dy) {
          for (int dx = 0; dx < scale; ++dx) img.at((4 * k + c) * scale + dx, r * scale + dy) = ink;
        }
      }
    }
  }
  return img;
}

AugmentConfig synthetic_augment_defaults() {
  AugmentConfig a;
  a.morph_sizes = {1, 3};
  a.word_gap = 32;
  a.background_median = 215;
  return a;
}

std::vector<std::string> SyntheticCorpusConfig::resolved_vocabulary() const {
  if (!vocabulary.empty()) return vocabulary;
  return random_vocabulary(vocab_size, min_len, max_len, Alphabet(), vocab_seed);
}

void SyntheticCorpusConfig::validate() const {
  if (vocabulary.empty() && vocab_size == 0) {
    throw Error(ErrorCode::InvalidConfig, "vocabulary must not be empty");
  }
  if (vocabulary.empty() && (min_len < 1 || max_len < min_len)) {
    throw Error(ErrorCode::InvalidConfig, "invalid vocabulary length range");
  }
  for (const auto& w : vocabulary) {
    if (w.empty()) throw Error(ErrorCode::EmptyLabel, "vocabulary contains an empty word");
    for (char c : w) glyph_pattern(c);
  }
  if (glyph_scale < 1 || canvas_width < 1 || canvas_height < 1) {
    throw Error(ErrorCode::InvalidConfig, "glyph scale and canvas size must be positive");
  }
  augment.validate();
}

nlohmann::json SyntheticCorpusConfig::to_json() const {
  return {{"vocabulary", vocabulary},         {"vocab_size", vocab_size},
          {"min_len", min_len},               {"max_len", max_len},
          {"vocab_seed", vocab_seed},
          {"glyph_scale", glyph_scale},
          {"pages", pages},                   {"words_per_page", words_per_page},
          {"canvas_width", canvas_width},     {"canvas_height", canvas_height},
          {"augment", augment.to_json()},     {"seed", seed}};
}

SyntheticCorpusConfig SyntheticCorpusConfig::from_json(const nlohmann::json& j) {
  SyntheticCorpusConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "vocabulary") c.vocabulary = v.get<std::vector<std::string>>();
    else if (key == "vocab_size") c.vocab_size = v.get<std::size_t>();
    else if (key == "min_len") c.min_len = v.get<std::size_t>();
    else if (key == "vocab_seed") c.vocab_seed = v.get<std::uint64_t>();
    else if (key == "max_len") c.max_len = v.get<std::size_t>();
    else if (key == "glyph_scale") c.glyph_scale = v.get<int>();
    else if (key == "pages") c.pages = v.get<std::size_t>();
    else if (key == "words_per_page") c.words_per_page = v.get<std::size_t>();
    else if (key == "canvas_width") c.canvas_width = v.get<int>();
    else if (key == "canvas_height") c.canvas_height = v.get<int>();
    else if (key == "augment") c.augment = AugmentConfig::from_json(v);
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else throw Error(ErrorCode::InvalidConfig, "unknown synth key '" + key + "'");
  }
  c.validate();
  return c;
}

std::vector<std::string> random_vocabulary(std::size_t count, std::size_t min_len,
                                           std::size_t max_len, const Alphabet& alphabet,
                                           std::uint64_t seed) {
  if (min_len < 1 || max_len < min_len || alphabet.size() == 0) {
    throw Error(ErrorCode::InvalidConfig, "invalid vocabulary length range");
  }
  std::mt19937_64 rng(seed);
  std::set<std::string> seen;
  std::vector<std::string> out;
  const auto& symbols = alphabet.symbols();
  for (std::size_t attempts = 0; out.size() < count; ++attempts) {
    if (attempts > 1000 * (count + 1)) throw Error(ErrorCode::InvalidConfig, "cannot draw enough distinct words");
    const std::size_t len = min_len + rng() % (max_len - min_len + 1);
    std::string w;
    for (std::size_t k = 0; k < len; ++k) w += symbols[rng() % symbols.size()];
    if (seen.insert(w).second) out.push_back(w);
  }
  return out;
}

SyntheticPage generate_synthetic_page(const SyntheticCorpusConfig& cfg, std::size_t index) {
  cfg.validate();
  std::vector<WordSample> bank;
  for (const auto& w : cfg.resolved_vocabulary()) bank.push_back({render_word(w, cfg.glyph_scale), w});
  AugmentConfig page_cfg = cfg.augment;
  page_cfg.seed = cfg.seed + index;
  page_cfg.max_words = cfg.words_per_page;
  return augment_full_page(bank, cfg.canvas_width, cfg.canvas_height, page_cfg);
}

std::vector<SyntheticPage> generate_synthetic_corpus(const SyntheticCorpusConfig& cfg) {
  SyntheticCorpusConfig fixed = cfg;
  fixed.vocabulary = cfg.resolved_vocabulary();
  std::vector<SyntheticPage> pages;
  for (std::size_t i = 0; i < cfg.pages; ++i) pages.push_back(generate_synthetic_page(fixed, i));
  return pages;
}

nlohmann::json ground_truth_to_json(const GroundTruthFile& gt) {
  nlohmann::json words = nlohmann::json::array();
  for (const auto& w : gt.words) {
    words.push_back({{"x", std::lround(w.box.x0())},
                     {"y", std::lround(w.box.y0())},
                     {"w", std::lround(w.box.w)},
                     {"h", std::lround(w.box.h)},
                     {"label", w.label}});
  }
  return {{"page", gt.page}, {"words", words}};
}

GroundTruthFile ground_truth_from_json(const nlohmann::json& j) {
  GroundTruthFile gt;
  try {
    gt.page = j.at("page").get<std::string>();
    for (const auto& w : j.at("words")) {
      gt.words.push_back({Box::from_xywh(w.at("x").get<double>(), w.at("y").get<double>(),
                                         w.at("w").get<double>(), w.at("h").get<double>()),
                          w.at("label").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("malformed ground truth: ") + e.what());
  }
  return gt;
}

void write_ground_truth(const std::filesystem::path& path, const GroundTruthFile& gt) {
  const auto text = ground_truth_to_json(gt).dump(2) + "\n";
  write_file_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

GroundTruthFile read_ground_truth(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return ground_truth_from_json(nlohmann::json::parse(bytes.begin(), bytes.end()));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
}

std::vector<DatasetEntry> list_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, "not a directory: " + dir.string());
  std::vector<DatasetEntry> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension().string();
    if (ext != ".png" && ext != ".pgm") continue;
    DatasetEntry d{e.path().stem().string(), e.path(), std::nullopt};
    auto gt = e.path();
    gt.replace_extension(".json");
    if (fs::exists(gt)) d.ground_truth = gt;
    out.push_back(std::move(d));
  }
  std::sort(out.begin(), out.end(), [](const DatasetEntry& a, const DatasetEntry& b) {
    return a.page_id < b.page_id || (a.page_id == b.page_id && a.image < b.image);
  });
  return out;
}

}  // namespace wordspot
