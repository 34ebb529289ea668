#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "wordspot/dtp.hpp"
#include "wordspot/embedder.hpp"
#include "wordspot/geometry.hpp"
#include "wordspot/image.hpp"
#include "wordspot/text_embeddings.hpp"

namespace wordspot {

struct Proposal {
  Box box;  // original page pixels
  double wordness = 0.0;
  std::vector<float> descriptor;  // unit norm

  bool operator==(const Proposal&) const = default;
};

struct PageIndex {
  std::string page_id;
  std::string image_path;
  int width = 0;  // original page size
  int height = 0;
  double scale = 1.0;       // working pixels per original pixel
  std::uint64_t n_dtp = 0;  // external proposals before filtering
  std::uint64_t n_total = 0;
  std::vector<Proposal> proposals;  // canonical box order

  bool operator==(const PageIndex&) const = default;
};

struct QueryConfig {
  double t_s = 0.5;    // keep wordness > t_s
  double t_nms = 0.5;  // wordness NMS overlap
  std::size_t k = 25;

  void validate() const;
  nlohmann::json to_json() const;
  static QueryConfig from_json(const nlohmann::json& j);
  bool operator==(const QueryConfig&) const = default;
};

/// A searchable collection of pages plus what is needed to embed queries.
struct SearchIndex {
  static constexpr std::uint32_t kFormatVersion = 1;

  TextEmbedder text;
  std::size_t dim = 0;
  QueryConfig query;
  int working_size = 1720;
  std::vector<PageIndex> pages;  // sorted by page_id

  const PageIndex* find_page(std::string_view page_id) const;
  std::size_t proposal_count() const;

  bool operator==(const SearchIndex& o) const {
    return text.to_json() == o.text.to_json() && dim == o.dim && query == o.query &&
           working_size == o.working_size && pages == o.pages;
  }
};

struct Hit {
  std::string page_id;
  Box box;
  double similarity = 0.0;
};

struct IndexOptions {
  DtpConfig dtp;
  QueryConfig query;
  int working_size = 1720;
  unsigned threads = 0;  // 0: hardware concurrency
};

/// Every DTP proposal of one page with its wordness and descriptor, boxes
/// mapped back to original pixels. No filtering.
PageIndex index_page_unfiltered(const GrayImage& original, std::string page_id,
                                std::string image_path, const TrainedModel& model,
                                const DtpConfig& dtp, int working_size);

/// Drops proposals with wordness <= t_s, then suppresses by wordness at t_nms.
PageIndex filter_page(const PageIndex& page, double t_s, double t_nms);

struct PageSource {
  std::string page_id;
  std::filesystem::path image_path;
};

struct PageError {
  std::string page_id;
  std::string message;
};

struct BuildResult {
  SearchIndex index;
  std::vector<PageError> errors;  // pages that failed to load; the rest are indexed
};

BuildResult build_index(std::span<const PageSource> pages, const TrainedModel& model,
                        const IndexOptions& opts);

/// Scores every proposal by cosine similarity, applies zero-overlap NMS
/// within each page, and returns the best `k` hits (all when k == 0),
/// sorted by non-increasing similarity.
std::vector<Hit> search(const SearchIndex& index, std::span<const double> query, std::size_t k);

std::vector<Hit> query_by_string(const SearchIndex& index, std::string_view text, std::size_t k);

/// Loads the page image and brings it to the index's working resolution.
GrayImage load_working_image(const SearchIndex& index, const PageIndex& page);

/// `box` is in original page pixels; `working` is the page at working size.
std::vector<double> describe_region(const SearchIndex& index, const PageIndex& page,
                                    const GrayImage& working, const Box& box,
                                    const TrainedModel& model);

std::vector<Hit> query_by_example(const SearchIndex& index, std::string_view page_id,
                                  const Box& box, const TrainedModel& model, std::size_t k);

std::vector<std::uint8_t> serialize_index(const SearchIndex& index);
SearchIndex deserialize_index(std::span<const std::uint8_t> bytes);
void save_index(const SearchIndex& index, const std::filesystem::path& path);
SearchIndex load_index(const std::filesystem::path& path);

}  // namespace wordspot
