#include "wordspot/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_map>

#include "wordspot/errors.hpp"

namespace wordspot {

const char* to_string(QueryMode m) { return m == QueryMode::qbs ? "qbs" : "qbe"; }

QueryMode query_mode_from_string(std::string_view s) {
  if (s == "qbs") return QueryMode::qbs;
  if (s == "qbe") return QueryMode::qbe;
  throw Error(ErrorCode::InvalidConfig, "unknown query mode '" + std::string(s) + "'");
}

void EvalConfig::validate() const {
  if (overlaps.empty()) throw Error(ErrorCode::InvalidConfig, "at least one overlap threshold is required");
  for (double t : overlaps) {
    if (!(t > 0.0 && t <= 1.0)) throw Error(ErrorCode::InvalidConfig, "overlap thresholds must lie in (0, 1]");
  }
  for (double t : grid_t_s) {
    if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorCode::InvalidConfig, "grid t_s values must lie in [0, 1]");
  }
  for (double t : grid_t_nms) {
    if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorCode::InvalidConfig, "grid t_nms values must lie in [0, 1]");
  }
}

nlohmann::json EvalConfig::to_json() const {
  return {{"overlaps", overlaps},
          {"mode", to_string(mode)},
          {"stopwords", stopwords},
          {"grid", {{"t_s", grid_t_s}, {"t_nms", grid_t_nms}}}};
}

EvalConfig EvalConfig::from_json(const nlohmann::json& j) {
  EvalConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "overlaps") {
      c.overlaps = value.get<std::vector<double>>();
    } else if (key == "mode") {
      c.mode = query_mode_from_string(value.get<std::string>());
    } else if (key == "stopwords") {
      c.stopwords = value.get<std::vector<std::string>>();
    } else if (key == "grid") {
      for (const auto& [gk, gv] : value.items()) {
        if (gk == "t_s") {
          c.grid_t_s = gv.get<std::vector<double>>();
        } else if (gk == "t_nms") {
          c.grid_t_nms = gv.get<std::vector<double>>();
        } else {
          throw Error(ErrorCode::InvalidConfig, "unknown key 'eval.grid." + gk + "'");
        }
      }
    } else {
      throw Error(ErrorCode::InvalidConfig, "unknown key 'eval." + key + "'");
    }
  }
  c.validate();
  return c;
}

double average_precision(const std::vector<bool>& relevant, std::size_t total_relevant) {
  if (total_relevant == 0) throw Error(ErrorCode::NoRelevantInstances, "query has no relevant instances");
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < relevant.size(); ++k) {
    if (relevant[k]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  return sum / static_cast<double>(total_relevant);
}

std::vector<bool> relevance(std::span<const Hit> ranked, std::span<const GroundTruthWord> gts,
                            std::string_view label, double t_o) {
  std::unordered_map<std::string, std::vector<std::size_t>> by_page;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    if (gts[i].label == label) by_page[gts[i].page_id].push_back(i);
  }
  std::vector<bool> used(gts.size(), false);
  std::vector<bool> rel(ranked.size(), false);
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    auto it = by_page.find(ranked[k].page_id);
    if (it == by_page.end()) continue;
    double best = t_o;
    std::optional<std::size_t> pick;
    for (auto g : it->second) {
      if (used[g]) continue;
      const double o = iou(ranked[k].box, gts[g].box);
      if (o > best) {
        best = o;
        pick = g;
      }
    }
    if (pick) {
      used[*pick] = true;
      rel[k] = true;
    }
  }
  return rel;
}

double average_precision(std::span<const Hit> ranked, std::span<const GroundTruthWord> gts,
                         std::string_view label, double t_o) {
  const auto r = static_cast<std::size_t>(
      std::count_if(gts.begin(), gts.end(), [&](const GroundTruthWord& g) { return g.label == label; }));
  return average_precision(relevance(ranked, gts, label, t_o), r);
}

double mean_average_precision(std::span<const double> aps) {
  if (aps.empty()) return 0.0;
  double s = 0.0;
  for (double a : aps) s += a;
  return s / static_cast<double>(aps.size());
}

double proposal_recall(std::span<const std::vector<Box>> proposals,
                       std::span<const std::vector<Box>> gts, double t_o) {
  double total = 0.0;
  std::size_t pages = 0;
  for (std::size_t p = 0; p < gts.size(); ++p) {
    if (gts[p].empty()) continue;
    ++pages;
    std::size_t covered = 0;
    for (const auto& g : gts[p]) {
      if (p >= proposals.size()) break;
      for (const auto& b : proposals[p]) {
        if (iou(b, g) > t_o) {
          ++covered;
          break;
        }
      }
    }
    total += static_cast<double>(covered) / static_cast<double>(gts[p].size());
  }
  return pages ? total / static_cast<double>(pages) : 0.0;
}

double index_recall(const SearchIndex& index, std::span<const GroundTruthWord> gts, double t_o) {
  std::map<std::string, std::size_t> slot;
  std::vector<std::vector<Box>> gt_boxes, props;
  for (const auto& g : gts) {
    auto [it, fresh] = slot.try_emplace(g.page_id, gt_boxes.size());
    if (fresh) {
      gt_boxes.emplace_back();
      props.emplace_back();
      if (const auto* page = index.find_page(g.page_id)) {
        for (const auto& p : page->proposals) props.back().push_back(p.box);
      }
    }
    gt_boxes[it->second].push_back(g.box);
  }
  return proposal_recall(props, gt_boxes, t_o);
}

namespace {

std::string qbe_name(const GroundTruthWord& g) {
  std::ostringstream os;
  os << g.page_id << ':' << std::lround(g.box.x0()) << ',' << std::lround(g.box.y0()) << ','
     << std::lround(g.box.w) << ',' << std::lround(g.box.h);
  return os.str();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string overlap_key(double t) { return nlohmann::json(t).dump(); }

nlohmann::json keyed(const std::map<double, double>& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : m) j[overlap_key(k)] = v;
  return j;
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& q : per_query) {
    per.push_back({{"query", q.query}, {"label", q.label}, {"ap", keyed(q.ap)}, {"r", q.relevant}});
  }
  return {{"config", config.to_json()}, {"per_query", per}, {"map", keyed(map)}, {"recall", keyed(recall)}};
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "query,label,r";
  for (double t : config.overlaps) os << ",ap@" << overlap_key(t);
  os << '\n';
  for (const auto& q : per_query) {
    os << csv_field(q.query) << ',' << csv_field(q.label) << ',' << q.relevant;
    for (double t : config.overlaps) os << ',' << q.ap.at(t);
    os << '\n';
  }
  os << "MAP,,";
  for (double t : config.overlaps) os << ',' << map.at(t);
  os << "\nrecall,,";
  for (double t : config.overlaps) os << ',' << recall.at(t);
  os << '\n';
  return os.str();
}

EvalReport evaluate(const SearchIndex& index, std::span<const GroundTruthWord> gts,
                    const EvalConfig& cfg, const TrainedModel* model) {
  cfg.validate();
  EvalReport report;
  report.config = cfg;
  const std::set<std::string> stop(cfg.stopwords.begin(), cfg.stopwords.end());

  std::map<std::string, std::size_t> counts;
  for (const auto& g : gts) ++counts[g.label];

  auto score = [&](QueryResult q, const std::vector<Hit>& hits) {
    q.relevant = counts[q.label];
    for (double t : cfg.overlaps) q.ap[t] = average_precision(hits, gts, q.label, t);
    report.per_query.push_back(std::move(q));
  };

  if (cfg.mode == QueryMode::qbs) {
    for (const auto& [label, n] : counts) {
      if (stop.count(label)) continue;
      score({label, label, 0, {}}, query_by_string(index, label, 0));
    }
  } else {
    if (model == nullptr) throw Error(ErrorCode::InvalidConfig, "query-by-example evaluation needs a model");
    std::map<std::string, GrayImage> working;
    for (const auto& g : gts) {
      if (stop.count(g.label)) continue;
      const auto* page = index.find_page(g.page_id);
      if (page == nullptr) throw Error(ErrorCode::UnknownPage, "unknown page '" + g.page_id + "'");
      auto it = working.find(g.page_id);
      if (it == working.end()) it = working.emplace(g.page_id, load_working_image(index, *page)).first;
      const auto q = describe_region(index, *page, it->second, g.box, *model);
      score({qbe_name(g), g.label, 0, {}}, search(index, q, 0));
    }
  }

  for (double t : cfg.overlaps) {
    std::vector<double> aps;
    for (const auto& q : report.per_query) aps.push_back(q.ap.at(t));
    report.map[t] = mean_average_precision(aps);
    report.recall[t] = index_recall(index, gts, t);
  }
  return report;
}

GridPoint grid_search(std::span<const double> t_s_values, std::span<const double> t_nms_values,
                      const std::function<double(double, double)>& objective) {
  std::optional<GridPoint> best;
  for (double ts : t_s_values) {
    for (double tn : t_nms_values) {
      const GridPoint p{ts, tn, objective(ts, tn)};
      const bool better =
          !best || p.score > best->score ||
          (p.score == best->score && (ts < best->t_s || (ts == best->t_s && tn < best->t_nms)));
      if (better) best = p;
    }
  }
  if (!best) throw Error(ErrorCode::InvalidConfig, "grid search needs a non-empty grid");
  return *best;
}

SearchIndex apply_filter(const SearchIndex& unfiltered, double t_s, double t_nms) {
  SearchIndex out = unfiltered;
  out.query.t_s = t_s;
  out.query.t_nms = t_nms;
  for (auto& page : out.pages) page = filter_page(page, t_s, t_nms);
  return out;
}

GridPoint tune_thresholds(const SearchIndex& unfiltered, std::span<const GroundTruthWord> gts,
                          const EvalConfig& cfg) {
  EvalConfig qbs = cfg;
  qbs.mode = QueryMode::qbs;
  return grid_search(cfg.grid_t_s, cfg.grid_t_nms, [&](double ts, double tn) {
    const auto report = evaluate(apply_filter(unfiltered, ts, tn), gts, qbs);
    double s = 0.0;
    for (const auto& [t, m] : report.map) s += m;
    return s / static_cast<double>(report.map.size());
  });
}

}  // namespace wordspot
