// wordspot command-line tool: corpus generation, training, indexing,
// querying, evaluation and the HTTP service.

#include <cmath>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "wordspot/augmentation.hpp"
#include "wordspot/config.hpp"
#include "wordspot/errors.hpp"
#include "wordspot/evaluation.hpp"
#include "wordspot/index.hpp"
#include "wordspot/service.hpp"
#include "wordspot/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace wordspot;

namespace {

/// Raised for bad command-line input; exits with status 1 like library errors.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string page_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "page_%03zu", i);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  write_file_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::vector<AnnotatedPage> load_annotated(const fs::path& dir) {
  std::vector<AnnotatedPage> pages;
  for (const auto& e : list_dataset(dir)) {
    if (!e.ground_truth) continue;
    const auto gt = read_ground_truth(*e.ground_truth);
    pages.push_back({e.page_id, read_image(e.image), gt.words});
  }
  if (pages.empty()) throw Error(ErrorCode::EmptyCorpus, "no annotated pages in " + dir.string());
  return pages;
}

std::vector<GroundTruthWord> load_gt_words(const fs::path& dir, const TextEmbedder& text) {
  std::vector<GroundTruthWord> out;
  for (const auto& e : list_dataset(dir)) {
    if (!e.ground_truth) continue;
    for (const auto& w : read_ground_truth(*e.ground_truth).words) {
      try {
        out.push_back({e.page_id, w.box, text.normalize(w.label)});
      } catch (const Error& err) {
        if (err.code() != ErrorCode::EmptyLabel) throw;
      }
    }
  }
  return out;
}

std::vector<PageSource> page_sources(const fs::path& dir) {
  std::vector<PageSource> out;
  for (const auto& e : list_dataset(dir)) out.push_back({e.page_id, e.image});
  if (out.empty()) throw Error(ErrorCode::EmptyCorpus, "no page images in " + dir.string());
  return out;
}

std::vector<double> parse_doubles(const std::string& list) {
  std::vector<double> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("not a number list: '" + list + "'");
    }
  }
  return out;
}

/// "page_id:x,y,w,h"; the page id may itself contain ':'.
std::pair<std::string, Box> parse_qbe(const std::string& spec) {
  const auto colon = spec.rfind(':');
  if (colon == std::string::npos || colon == 0) throw UsageError("--qbe expects page:x,y,w,h");
  const auto nums = parse_doubles(spec.substr(colon + 1));
  if (nums.size() != 4) throw UsageError("--qbe expects page:x,y,w,h");
  json wire = json::array();
  for (double v : nums) {
    if (v != std::floor(v)) throw UsageError("--qbe box entries must be integers");
    wire.push_back(static_cast<long>(v));
  }
  return {spec.substr(0, colon), box_from_wire(wire)};
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

std::optional<std::string> config_arg;

ProjectConfig current_config() { return load_config(resolve_config_path(config_arg)); }

// ---- verbs ---------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> pages;
};

void run_synth(const SynthArgs& a) {
  auto cfg = current_config().synth;
  if (a.seed) cfg.seed = *a.seed;
  if (a.pages) cfg.pages = *a.pages;
  fs::create_directories(a.out);
  cfg.vocabulary = cfg.resolved_vocabulary();
  for (std::size_t i = 0; i < cfg.pages; ++i) {
    const auto page = generate_synthetic_page(cfg, i);
    const auto name = page_name(i);
    write_image(fs::path(a.out) / (name + ".png"), page.image);
    write_ground_truth(fs::path(a.out) / (name + ".json"), {name + ".png", page.words});
  }
  write_text(fs::path(a.out) / "vocabulary.txt", [&] {
    std::string s;
    for (const auto& w : cfg.vocabulary) s += w + "\n";
    return s;
  }());
  std::cout << json{{"pages", cfg.pages}, {"out", a.out}, {"vocabulary", cfg.vocabulary.size()}}.dump() << "\n";
}

struct AugmentArgs {
  std::string mode;
  std::string in;
  std::string out;
  std::size_t pages = 1;
  int width = 1720;
  int height = 600;
  std::optional<std::uint64_t> seed;
};

void run_augment(const AugmentArgs& a) {
  const auto project = current_config();
  AugmentConfig cfg = project.synth.augment;
  if (a.seed) cfg.seed = *a.seed;
  const auto src = load_annotated(a.in);
  fs::create_directories(a.out);
  std::size_t written = 0;
  if (a.mode == "inplace") {
    for (std::size_t i = 0; i < src.size(); ++i) {
      AugmentConfig page_cfg = cfg;
      page_cfg.seed = cfg.seed + i;
      const auto img = augment_in_place(src[i].image, src[i].words, page_cfg);
      write_image(fs::path(a.out) / (src[i].page_id + ".png"), img);
      write_ground_truth(fs::path(a.out) / (src[i].page_id + ".json"), {src[i].page_id + ".png", src[i].words});
      ++written;
    }
  } else {
    std::vector<WordSample> bank;
    for (const auto& p : src) {
      for (const auto& w : p.words) {
        const int x = static_cast<int>(std::lround(w.box.x0()));
        const int y = static_cast<int>(std::lround(w.box.y0()));
        const auto c = crop(p.image, x, y, static_cast<int>(std::lround(w.box.w)), static_cast<int>(std::lround(w.box.h)));
        if (c.width > 0 && c.height > 0) bank.push_back({c, w.label});
      }
    }
    cfg.background_median.reset();
    for (std::size_t i = 0; i < a.pages; ++i) {
      AugmentConfig page_cfg = cfg;
      page_cfg.seed = cfg.seed + i;
      const auto page = augment_full_page(bank, a.width, a.height, page_cfg);
      const auto name = page_name(i);
      write_image(fs::path(a.out) / (name + ".png"), page.image);
      write_ground_truth(fs::path(a.out) / (name + ".json"), {name + ".png", page.words});
      ++written;
    }
  }
  std::cout << json{{"mode", a.mode}, {"pages", written}, {"out", a.out}}.dump() << "\n";
}

struct TrainArgs {
  std::string corpus;
  std::optional<std::string> loss;
  std::optional<std::string> embedding;
  std::string out;
  std::optional<long> iterations;
  std::optional<std::uint64_t> seed;
};

void run_train(const TrainArgs& a) {
  auto project = current_config();
  if (a.loss) project.train.loss = embedding_loss_from_string(*a.loss);
  if (a.embedding) project.embedding = embedding_kind_from_string(*a.embedding);
  if (a.iterations) project.train.iterations = *a.iterations;
  if (a.seed) project.train.seed = *a.seed;
  project.validate();

  const auto pages = load_annotated(a.corpus);
  std::size_t n_val = pages.size() >= 2
                          ? static_cast<std::size_t>(std::ceil(project.train.val_fraction * static_cast<double>(pages.size())))
                          : 0;
  n_val = std::min(n_val, pages.size() - 1);
  const std::span<const AnnotatedPage> all(pages);
  const auto train_pages = all.first(pages.size() - n_val);
  const auto val_pages = all.last(n_val);

  const auto text = TextEmbedder::make(project.embedding);
  const auto opts = project.corpus_options();
  const auto corpus = build_training_corpus(train_pages, text, opts);
  std::optional<TrainingCorpus> validation;
  if (!val_pages.empty()) validation = build_training_corpus(val_pages, text, opts);

  std::cerr << json{{"train_pages", train_pages.size()},
                    {"val_pages", val_pages.size()},
                    {"word_crops", corpus.positives.size()},
                    {"background_crops", corpus.negatives.size()}}
                   .dump()
            << "\n";
  const auto result = train(corpus, validation ? &*validation : nullptr, text, project.train_config(),
                            [](const ValidationPoint& vp) {
                              std::cout << json{{"iteration", vp.iteration},
                                                {"val_map", vp.map},
                                                {"loss", vp.losses.total}}
                                               .dump()
                                        << std::endl;
                            });
  save_model(result.model, a.out);
  std::cout << json{{"model", a.out}, {"best_iteration", result.best_iteration}, {"best_val_map", result.best_map}}.dump()
            << "\n";
}

struct IndexArgs {
  std::string pages;
  std::string model;
  std::string out;
  std::optional<double> t_s;
  std::optional<double> t_nms;
  unsigned threads = 0;
};

int run_index(const IndexArgs& a) {
  const auto project = current_config();
  auto opts = project.index_options();
  if (a.t_s) opts.query.t_s = *a.t_s;
  if (a.t_nms) opts.query.t_nms = *a.t_nms;
  opts.threads = a.threads;
  const auto model = load_model(a.model);
  const auto sources = page_sources(a.pages);
  const auto built = build_index(sources, model, opts);
  for (const auto& e : built.errors) {
    std::cerr << json{{"error", "PageFailed"}, {"page_id", e.page_id}, {"message", e.message}}.dump() << "\n";
  }
  save_index(built.index, a.out);
  std::cout << json{{"index", a.out},
                    {"pages", built.index.pages.size()},
                    {"proposals", built.index.proposal_count()},
                    {"failed", built.errors.size()}}
                   .dump()
            << "\n";
  return built.index.pages.empty() && !built.errors.empty() ? 1 : 0;
}

struct SearchArgs {
  std::string index;
  std::optional<std::string> query;
  std::optional<std::string> qbe;
  std::optional<std::string> model;
  std::optional<std::size_t> k;
};

void run_search(const SearchArgs& a) {
  if (a.query.has_value() == a.qbe.has_value()) throw UsageError("give exactly one of --query or --qbe");
  const auto index = load_index(a.index);
  const std::size_t k = a.k ? *a.k : index.query.k;
  std::vector<Hit> hits;
  if (a.query) {
    hits = query_by_string(index, *a.query, k);
  } else {
    const auto [page, box] = parse_qbe(*a.qbe);
    const auto model = load_model(a.model ? fs::path(*a.model) : fs::path(current_config().paths.model));
    hits = query_by_example(index, page, box, model, k);
  }
  for (std::size_t i = 0; i < hits.size(); ++i) std::cout << hit_to_json(hits[i], i + 1).dump() << "\n";
}

struct EvalArgs {
  std::string index;
  std::string gt;
  std::string mode = "qbs";
  std::optional<std::string> overlap;
  std::optional<std::string> model;
  std::optional<std::string> stopwords;
  std::optional<std::string> out;
  std::optional<std::string> csv;
};

void run_eval(const EvalArgs& a) {
  auto cfg = current_config().eval;
  cfg.mode = query_mode_from_string(a.mode);
  if (a.overlap) cfg.overlaps = parse_doubles(*a.overlap);
  if (a.stopwords) cfg.stopwords = read_lines(*a.stopwords);
  const auto index = load_index(a.index);
  for (auto& s : cfg.stopwords) s = index.text.normalize(s);
  const auto gts = load_gt_words(a.gt, index.text);
  std::optional<TrainedModel> model;
  if (cfg.mode == QueryMode::qbe) {
    if (!a.model) throw UsageError("--model is required for --mode qbe");
    model = load_model(*a.model);
  }
  const auto report = evaluate(index, gts, cfg, model ? &*model : nullptr);
  const auto text = report.to_json().dump(2) + "\n";
  if (a.out) write_text(*a.out, text);
  if (a.csv) write_text(*a.csv, report.to_csv());
  std::cout << json{{"map", report.to_json()["map"]}, {"recall", report.to_json()["recall"]}, {"queries", report.per_query.size()}}.dump()
            << "\n";
}

struct GridArgs {
  std::string val;
  std::string model;
  std::optional<std::string> write_config;
};

void run_gridsearch(const GridArgs& a) {
  const auto path = resolve_config_path(config_arg);
  auto project = load_config(path);
  const auto model = load_model(a.model);
  const auto opts = project.index_options();
  SearchIndex unfiltered;
  unfiltered.text = model.text;
  unfiltered.dim = model.text.dim();
  unfiltered.query = project.query;
  unfiltered.working_size = opts.working_size;
  for (const auto& src : page_sources(a.val)) {
    const auto img = read_image(src.image_path);
    unfiltered.pages.push_back(
        index_page_unfiltered(img, src.page_id, src.image_path.string(), model, opts.dtp, opts.working_size));
  }
  const auto gts = load_gt_words(a.val, unfiltered.text);
  const auto best = tune_thresholds(unfiltered, gts, project.eval);
  project.query.t_s = best.t_s;
  project.query.t_nms = best.t_nms;
  const auto target = a.write_config ? std::optional<fs::path>(*a.write_config) : path;
  if (target) save_config(project, *target);
  std::cout << json{{"t_s", best.t_s}, {"t_nms", best.t_nms}, {"map", best.score},
                    {"config", target ? target->string() : std::string()}}
                   .dump()
            << "\n";
}

struct ServeArgs {
  std::string index;
  std::string addr = "127.0.0.1:8080";
  std::optional<std::string> model;
  std::optional<std::string> static_dir;
};

HttpServer* g_server = nullptr;

void run_serve(const ServeArgs& a) {
  const auto colon = a.addr.rfind(':');
  if (colon == std::string::npos) throw UsageError("--addr expects host:port");
  ServeOptions opts;
  opts.host = a.addr.substr(0, colon);
  try {
    opts.port = std::stoi(a.addr.substr(colon + 1));
  } catch (const std::exception&) {
    throw UsageError("--addr expects host:port");
  }
  if (a.static_dir) opts.static_dir = fs::path(*a.static_dir);
  std::optional<TrainedModel> model;
  if (a.model) model = load_model(*a.model);
  auto service = std::make_shared<const SearchService>(load_index(a.index), std::move(model));
  HttpServer server(service, opts);
  const int port = server.bind();
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  std::cout << json{{"listening", opts.host + ":" + std::to_string(port)}}.dump() << std::endl;
  server.listen();
  g_server = nullptr;
}

int fail(int status, std::string_view code, const std::string& message) {
  std::cerr << error_json(code, message).dump() << "\n";
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Segmentation-free word search over scanned pages"};
  app.require_subcommand(1);
  app.add_option("--config", config_arg, "Project config JSON (default: $WORDSPOT_CONFIG)");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Render a synthetic glyph corpus with ground truth");
  c_synth->add_option("--out", synth.out, "Output directory")->required();
  c_synth->add_option("--seed", synth.seed, "Override synth.seed");
  c_synth->add_option("--pages", synth.pages, "Override synth.pages");

  AugmentArgs aug;
  auto* c_aug = app.add_subcommand("augment", "Augment an annotated corpus");
  c_aug->add_option("--mode", aug.mode, "inplace or fullpage")->required()->check(CLI::IsMember({"inplace", "fullpage"}));
  c_aug->add_option("--in", aug.in, "Annotated input directory")->required();
  c_aug->add_option("--out", aug.out, "Output directory")->required();
  c_aug->add_option("--pages", aug.pages, "Pages to generate (fullpage)");
  c_aug->add_option("--width", aug.width, "Canvas width (fullpage)");
  c_aug->add_option("--height", aug.height, "Canvas height (fullpage)");
  c_aug->add_option("--seed", aug.seed, "Augmentation seed");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train the region embedder");
  c_train->add_option("--corpus", tr.corpus, "Annotated corpus directory")->required();
  c_train->add_option("--loss", tr.loss, "cosine, cosemb or bce")->check(CLI::IsMember({"cosine", "cosemb", "bce"}));
  c_train->add_option("--embedding", tr.embedding, "dctow or phoc")->check(CLI::IsMember({"dctow", "phoc"}));
  c_train->add_option("--out", tr.out, "Model file")->required();
  c_train->add_option("--iterations", tr.iterations, "Override train.iterations");
  c_train->add_option("--seed", tr.seed, "Override train.seed");

  IndexArgs ix;
  auto* c_index = app.add_subcommand("index", "Build a search index over page images");
  c_index->add_option("--pages", ix.pages, "Page image directory")->required();
  c_index->add_option("--model", ix.model, "Model file")->required();
  c_index->add_option("--out", ix.out, "Index file")->required();
  c_index->add_option("--t-s", ix.t_s, "Wordness threshold");
  c_index->add_option("--t-nms", ix.t_nms, "Wordness NMS overlap");
  c_index->add_option("--threads", ix.threads, "Worker threads (0: all cores)");

  SearchArgs se;
  auto* c_search = app.add_subcommand("search", "Query an index; prints hits as JSON lines");
  c_search->add_option("--index", se.index, "Index file")->required();
  c_search->add_option("--query", se.query, "Query string");
  c_search->add_option("--qbe", se.qbe, "Query by example: page:x,y,w,h");
  c_search->add_option("--model", se.model, "Model file (for --qbe)");
  c_search->add_option("--k", se.k, "Number of hits");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Evaluate retrieval against ground truth");
  c_eval->add_option("--index", ev.index, "Index file")->required();
  c_eval->add_option("--gt", ev.gt, "Directory with ground-truth sidecars")->required();
  c_eval->add_option("--mode", ev.mode, "qbs or qbe")->check(CLI::IsMember({"qbs", "qbe"}));
  c_eval->add_option("--overlap", ev.overlap, "Comma-separated overlap thresholds");
  c_eval->add_option("--model", ev.model, "Model file (for qbe)");
  c_eval->add_option("--stopwords", ev.stopwords, "File with one stopword per line");
  c_eval->add_option("--out", ev.out, "Report JSON path");
  c_eval->add_option("--csv", ev.csv, "Report CSV path");

  GridArgs gr;
  auto* c_grid = app.add_subcommand("gridsearch", "Tune t_s and t_nms on a validation set");
  c_grid->add_option("--val", gr.val, "Annotated validation directory")->required();
  c_grid->add_option("--model", gr.model, "Model file")->required();
  c_grid->add_option("--write-config", gr.write_config, "Config file to write (default: --config)");

  ServeArgs sv;
  auto* c_serve = app.add_subcommand("serve", "Serve the HTTP API");
  c_serve->add_option("--index", sv.index, "Index file")->required();
  c_serve->add_option("--addr", sv.addr, "host:port");
  c_serve->add_option("--model", sv.model, "Model file (enables query by example)");
  c_serve->add_option("--static", sv.static_dir, "Directory with the web UI");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return fail(1, "UsageError", e.what());
  }

  try {
    if (*c_synth) run_synth(synth);
    if (*c_aug) run_augment(aug);
    if (*c_train) run_train(tr);
    if (*c_index) return run_index(ix);
    if (*c_search) run_search(se);
    if (*c_eval) run_eval(ev);
    if (*c_grid) run_gridsearch(gr);
    if (*c_serve) run_serve(sv);
    return 0;
  } catch (const UsageError& e) {
    return fail(1, "UsageError", e.what());
  } catch (const Error& e) {
    return fail(1, error_name(e.code()), e.what());
  } catch (const std::exception& e) {
    return fail(2, "InternalError", e.what());
  }
}
