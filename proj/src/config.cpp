#include "wordspot/config.hpp"

#include <cstdlib>

#include "wordspot/errors.hpp"

namespace wordspot {

namespace {

using nlohmann::json;

/// Calls `fn(key, value)` for each member, rejecting members outside `allowed`.
template <typename Fn>
void read_object(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed,
                 Fn&& fn) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, std::string(where) + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || a == key;
    if (!known) throw Error(ErrorCode::InvalidConfig, "unknown key '" + std::string(where) + "." + key + "'");
    fn(key, value);
  }
}

}  // namespace

json dtp_to_json(const DtpConfig& c) {
  json kernels = json::array();
  for (const auto& k : c.kernels) kernels.push_back({k.w, k.h});
  return {{"mean_multiples", c.mean_multiples},
          {"kernels", kernels},
          {"min_area", c.min_area},
          {"pad", c.pad},
          {"dedup_iou", c.dedup_iou}};
}

DtpConfig dtp_from_json(const json& j) {
  DtpConfig c;
  read_object(j, "dtp", {"mean_multiples", "kernels", "min_area", "pad", "dedup_iou"},
              [&](const std::string& key, const json& v) {
                if (key == "mean_multiples") c.mean_multiples = v.get<std::vector<double>>();
                if (key == "kernels") {
                  c.kernels.clear();
                  for (const auto& k : v) c.kernels.push_back({k.at(0).get<int>(), k.at(1).get<int>()});
                }
                if (key == "min_area") c.min_area = v.get<double>();
                if (key == "pad") c.pad = v.get<double>();
                if (key == "dedup_iou") c.dedup_iou = v.get<double>();
              });
  c.validate();
  return c;
}

void ProjectConfig::validate() const {
  if (working_size < 16) throw Error(ErrorCode::InvalidConfig, "working_size must be at least 16");
  dtp.validate();
  query.validate();
  eval.validate();
  if (train.iterations < 0 || train.batch < 2 || train.val_fraction < 0.0 || train.val_fraction >= 1.0 ||
      train.lr <= 0.0 || train.margin < -1.0 || train.margin > 1.0) {
    throw Error(ErrorCode::InvalidConfig, "invalid training settings");
  }
  if (train.loss == EmbeddingLoss::bce && embedding != EmbeddingKind::phoc) {
    throw Error(ErrorCode::InvalidConfig, "bce loss needs the phoc embedding");
  }
  synth.validate();
}

json ProjectConfig::to_json() const {
  return {{"paths", {{"corpus", paths.corpus}, {"model", paths.model}, {"index", paths.index}}},
          {"embedding", to_string(embedding)},
          {"working_size", working_size},
          {"dtp", dtp_to_json(dtp)},
          {"query", query.to_json()},
          {"eval", eval.to_json()},
          {"train",
           {{"loss", std::string(to_string(train.loss))},
            {"iterations", train.iterations},
            {"batch", train.batch},
            {"val_every", train.val_every},
            {"val_fraction", train.val_fraction},
            {"hidden_dims", train.hidden_dims},
            {"lr", train.lr},
            {"decay_every", train.decay_every},
            {"margin", train.margin},
            {"max_negatives_per_page", train.max_negatives_per_page},
            {"jitter_per_gt", train.jitter_per_gt},
            {"jitter", train.jitter},
            {"seed", train.seed}}},
          {"synth", synth.to_json()}};
}

ProjectConfig ProjectConfig::from_json(const json& j) {
  ProjectConfig c;
  try {
    read_object(j, "config",
                {"paths", "embedding", "working_size", "dtp", "query", "eval", "train", "synth"},
                [&](const std::string& key, const json& v) {
                  if (key == "paths") {
                    read_object(v, "paths", {"corpus", "model", "index"}, [&](const std::string& k, const json& p) {
                      (k == "corpus" ? c.paths.corpus : k == "model" ? c.paths.model : c.paths.index) =
                          p.get<std::string>();
                    });
                  } else if (key == "embedding") {
                    c.embedding = embedding_kind_from_string(v.get<std::string>());
                  } else if (key == "working_size") {
                    c.working_size = v.get<int>();
                  } else if (key == "dtp") {
                    c.dtp = dtp_from_json(v);
                  } else if (key == "query") {
                    read_object(v, "query", {"t_s", "t_nms", "k"}, [](const std::string&, const json&) {});
                    json full = c.query.to_json();
                    full.update(v);
                    c.query = QueryConfig::from_json(full);
                  } else if (key == "eval") {
                    c.eval = EvalConfig::from_json(v);
                  } else if (key == "synth") {
                    c.synth = SyntheticCorpusConfig::from_json(v);
                  } else if (key == "train") {
                    auto& t = c.train;
                    read_object(v, "train",
                                {"loss", "iterations", "batch", "val_every", "val_fraction", "hidden_dims", "lr",
                                 "decay_every", "margin", "max_negatives_per_page", "jitter_per_gt", "jitter",
                                 "seed"},
                                [&](const std::string& k, const json& x) {
                                  if (k == "loss") t.loss = embedding_loss_from_string(x.get<std::string>());
                                  if (k == "iterations") t.iterations = x.get<long>();
                                  if (k == "batch") t.batch = x.get<std::size_t>();
                                  if (k == "val_every") t.val_every = x.get<long>();
                                  if (k == "val_fraction") t.val_fraction = x.get<double>();
                                  if (k == "hidden_dims") t.hidden_dims = x.get<std::vector<int>>();
                                  if (k == "lr") t.lr = x.get<double>();
                                  if (k == "decay_every") t.decay_every = x.get<long>();
                                  if (k == "margin") t.margin = x.get<double>();
                                  if (k == "max_negatives_per_page") t.max_negatives_per_page = x.get<std::size_t>();
                                  if (k == "jitter_per_gt") t.jitter_per_gt = x.get<std::size_t>();
                                  if (k == "jitter") t.jitter = x.get<double>();
                                  if (k == "seed") t.seed = x.get<std::uint64_t>();
                                });
                  }
                });
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig ProjectConfig::train_config() const {
  TrainConfig t;
  t.net.hidden_dims = train.hidden_dims;
  t.adam.lr = train.lr;
  t.adam.decay_every = train.decay_every;
  t.loss.loss = train.loss;
  t.loss.margin.gamma = train.margin;
  t.iterations = train.iterations;
  t.batch = train.batch;
  t.val_every = train.val_every;
  t.seed = train.seed;
  return t;
}

CorpusOptions ProjectConfig::corpus_options() const {
  CorpusOptions o;
  o.dtp = dtp;
  o.working_size = working_size;
  o.max_negatives_per_page = train.max_negatives_per_page;
  o.jitter_per_gt = train.jitter_per_gt;
  o.jitter = train.jitter;
  o.seed = train.seed;
  return o;
}

IndexOptions ProjectConfig::index_options() const {
  IndexOptions o;
  o.dtp = dtp;
  o.query = query;
  o.working_size = working_size;
  return o;
}

ProjectConfig load_config(const std::optional<std::filesystem::path>& path) {
  if (!path) return ProjectConfig{};
  const auto bytes = read_file_bytes(*path);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, path->string() + ": " + e.what());
  }
  return ProjectConfig::from_json(j);
}

void save_config(const ProjectConfig& cfg, const std::filesystem::path& path) {
  const auto text = cfg.to_json().dump(2) + "\n";
  write_file_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::optional<std::filesystem::path> resolve_config_path(const std::optional<std::string>& explicit_path) {
  if (explicit_path && !explicit_path->empty()) return std::filesystem::path(*explicit_path);
  if (const char* env = std::getenv("WORDSPOT_CONFIG"); env != nullptr && *env != '\0') {
    return std::filesystem::path(env);
  }
  return std::nullopt;
}

}  // namespace wordspot
