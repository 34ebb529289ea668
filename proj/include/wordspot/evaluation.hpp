#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "wordspot/embedder.hpp"
#include "wordspot/geometry.hpp"
#include "wordspot/index.hpp"

namespace wordspot {

struct GroundTruthWord {
  std::string page_id;
  Box box;
  std::string label;  // normalized
};

enum class QueryMode { qbs, qbe };
const char* to_string(QueryMode m);
QueryMode query_mode_from_string(std::string_view s);

struct EvalConfig {
  std::vector<double> overlaps{0.25, 0.5};
  QueryMode mode = QueryMode::qbs;
  std::vector<std::string> stopwords;
  std::vector<double> grid_t_s{0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<double> grid_t_nms{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};

  void validate() const;
  nlohmann::json to_json() const;
  static EvalConfig from_json(const nlohmann::json& j);
};

/// AP of a ranked relevance pattern against R relevant items in total.
/// Throws NoRelevantInstances when R is zero.
double average_precision(const std::vector<bool>& relevant, std::size_t total_relevant);

/// Marks each hit relevant when it overlaps (IoU > t_o) a not-yet-credited
/// gt word of `label` on the same page. Hits claim gts greedily in rank
/// order, each hit taking its highest-IoU free gt.
std::vector<bool> relevance(std::span<const Hit> ranked, std::span<const GroundTruthWord> gts,
                            std::string_view label, double t_o);

double average_precision(std::span<const Hit> ranked, std::span<const GroundTruthWord> gts,
                         std::string_view label, double t_o);

/// Mean of per-query APs; 0 for an empty list.
double mean_average_precision(std::span<const double> aps);

/// Per page, the fraction of gt boxes with some proposal at IoU > t_o,
/// averaged over pages that carry gts.
double proposal_recall(std::span<const std::vector<Box>> proposals,
                       std::span<const std::vector<Box>> gts, double t_o);

/// Recall of the index's proposals against gt words (pages matched by id).
double index_recall(const SearchIndex& index, std::span<const GroundTruthWord> gts, double t_o);

struct QueryResult {
  std::string query;  // label, or "page:x,y,w,h" for QbE
  std::string label;
  std::size_t relevant = 0;
  std::map<double, double> ap;  // by overlap
};

struct EvalReport {
  EvalConfig config;
  std::vector<QueryResult> per_query;
  std::map<double, double> map;
  std::map<double, double> recall;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

/// Full protocol. QbS queries are the unique gt labels minus stopwords;
/// QbE queries are all gt crops and need `model`.
EvalReport evaluate(const SearchIndex& index, std::span<const GroundTruthWord> gts,
                    const EvalConfig& cfg, const TrainedModel* model = nullptr);

struct GridPoint {
  double t_s = 0.0;
  double t_nms = 0.0;
  double score = 0.0;
};

/// Exhaustive search for the maximum of `objective`; ties prefer smaller
/// t_s, then smaller t_nms, so the result does not depend on grid order.
GridPoint grid_search(std::span<const double> t_s_values, std::span<const double> t_nms_values,
                      const std::function<double(double, double)>& objective);

/// Filters every page of an unfiltered index with (t_s, t_nms).
SearchIndex apply_filter(const SearchIndex& unfiltered, double t_s, double t_nms);

/// Grid search of the filtering thresholds on an unfiltered validation
/// index; the objective is QbS MAP averaged over the configured overlaps.
GridPoint tune_thresholds(const SearchIndex& unfiltered, std::span<const GroundTruthWord> gts,
                          const EvalConfig& cfg);

}  // namespace wordspot
