#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <thread>

#include "wordspot/augmentation.hpp"
#include "wordspot/config.hpp"
#include "wordspot/errors.hpp"
#include "wordspot/service.hpp"

// After Eigen: <resolv.h> defines a _res macro that clashes with Eigen internals.
#include "httplib.h"

using namespace wordspot;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

TrainedModel untrained_model() {
  TrainedModel m;
  EmbedNetConfig c;
  c.hidden_dims = {32};
  c.seed = 9;
  m.net = DenseNet(c);
  m.net.set_mode(NetMode::eval);
  m.net.round_to_float();
  m.text = TextEmbedder::make(EmbeddingKind::dctow);
  return m;
}

struct Fixture {
  fs::path dir;
  TrainedModel model = untrained_model();
  SearchIndex index;

  Fixture() {
    dir = fs::temp_directory_path() / "wordspot_service_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    SyntheticCorpusConfig sc;
    sc.vocab_size = 8;
    sc.canvas_width = 600;
    sc.canvas_height = 240;
    sc.words_per_page = 10;
    write_image(dir / "pg.png", generate_synthetic_page(sc, 0).image);
    IndexOptions opts;
    opts.query.t_s = 0.0;
    opts.query.t_nms = 1.0;
    opts.working_size = 600;
    const std::vector<PageSource> src{{"pg", dir / "pg.png"}};
    index = build_index(src, model, opts).index;
  }
  ~Fixture() { fs::remove_all(dir); }
};

json body(const HttpReply& r) { return json::parse(r.body); }

}  // namespace

TEST_CASE("project config round trips and rejects unknown keys") {
  const ProjectConfig d;
  const auto j = d.to_json();
  CHECK(ProjectConfig::from_json(j).to_json() == j);
  CHECK(ProjectConfig::from_json(json::object()).to_json() == j);
  CHECK(j["query"]["t_s"] == 0.5);
  CHECK(j["embedding"] == "dctow");

  auto custom = j;
  custom["query"]["k"] = 7;
  custom["dtp"]["kernels"] = json::array({json::array({5, 3})});
  custom["train"]["loss"] = "cosemb";
  const auto parsed = ProjectConfig::from_json(custom);
  CHECK(parsed.query.k == 7);
  REQUIRE(parsed.dtp.kernels.size() == 1);
  CHECK(parsed.dtp.kernels[0] == StructuringElement{5, 3});
  CHECK(parsed.to_json() == custom);

  for (auto bad : {json{{"nope", 1}}, json{{"query", {{"t_z", 1}}}}, json{{"embedding", "xyz"}},
                   json{{"query", {{"t_s", 2.0}}}}}) {
    CHECK_THROWS_AS(ProjectConfig::from_json(bad), Error);
  }
}

TEST_CASE("config files and path resolution") {
  const auto dir = fs::temp_directory_path() / "wordspot_config_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  ProjectConfig c;
  c.working_size = 900;
  save_config(c, dir / "c.json");
  CHECK(load_config(dir / "c.json").working_size == 900);
  CHECK(load_config(std::nullopt).working_size == 1720);

  CHECK(resolve_config_path(std::string("x.json")) == fs::path("x.json"));
  ::setenv("WORDSPOT_CONFIG", (dir / "c.json").c_str(), 1);
  CHECK(resolve_config_path(std::nullopt) == dir / "c.json");
  ::unsetenv("WORDSPOT_CONFIG");
  CHECK(!resolve_config_path(std::nullopt));
  fs::remove_all(dir);
}

TEST_CASE("wire boxes") {
  CHECK(box_to_wire(Box::from_xywh(10, 20, 30, 40)) == std::array<long, 4>{10, 20, 30, 40});
  CHECK(box_from_wire(json::array({1, 2, 3, 4})) == Box::from_xywh(1, 2, 3, 4));
  CHECK_THROWS_AS(box_from_wire(json::array({1, 2, 0, 4})), Error);
  CHECK_THROWS_AS(box_from_wire(json::array({1, 2, 3})), Error);
  CHECK_THROWS_AS(box_from_wire(json::array({1.5, 2, 3, 4})), Error);
  const auto h = hit_to_json({"p", Box::from_xywh(1, 2, 3, 4), 0.5}, 1);
  CHECK(h["page_id"] == "p");
  CHECK(h["rank"] == 1);
  CHECK(h["box"] == json::array({1, 2, 3, 4}));
}

TEST_CASE("service handlers") {
  Fixture f;
  SearchService svc(f.index, f.model);

  const auto health = body(svc.health());
  CHECK(health["status"] == "ok");
  CHECK(health["pages"] == 1);
  CHECK(health["proposals"] == f.index.proposal_count());
  CHECK(body(svc.pages())[0]["width"] == 600);

  const auto img = svc.page_image("pg");
  CHECK(img.status == 200);
  CHECK(img.content_type == "image/png");
  CHECK(img.body.substr(1, 3) == "PNG");
  CHECK(svc.page_image("zz").status == 404);

  const auto r = svc.search(std::string("abc"), std::string("5"));
  CHECK(r.status == 200);
  const auto hits = body(r)["hits"];
  CHECK(hits.size() <= 5);
  for (std::size_t i = 1; i < hits.size(); ++i) {
    CHECK(hits[i - 1]["similarity"].get<double>() >= hits[i]["similarity"].get<double>());
    CHECK(hits[i]["rank"] == i + 1);
  }
  CHECK(svc.search(std::nullopt, std::nullopt).status == 400);
  CHECK(svc.search(std::string("abc"), std::string("0")).status == 400);
  CHECK(svc.search(std::string("abc"), std::string("x")).status == 400);
  const auto empty = svc.search(std::string("%%"), std::nullopt);
  CHECK(empty.status == 400);
  CHECK(body(empty)["error"] == "EmptyLabel");

  // QbE from a proposal box reproduces the library ranking.
  const Box b = f.index.pages[0].proposals[0].box;
  const auto wire = box_to_wire(b);
  const auto qbe = svc.search_qbe(json{{"page_id", "pg"}, {"box", wire}, {"k", 10}}.dump());
  REQUIRE(qbe.status == 200);
  const auto direct = query_by_example(f.index, "pg", box_from_wire(json(wire)), f.model, 10);
  CHECK(body(qbe) == hits_to_json(direct));

  CHECK(svc.search_qbe("{").status == 400);
  CHECK(svc.search_qbe(json{{"page_id", "zz"}, {"box", {0, 0, 5, 5}}}.dump()).status == 404);
  CHECK(svc.search_qbe(json{{"page_id", "pg"}, {"box", {0, 0, 5000, 5}}}.dump()).status == 413);
  CHECK(svc.search_qbe(json{{"page_id", "pg"}, {"box", {0, 0, 0, 5}}}.dump()).status == 400);
  SearchService no_model(f.index, std::nullopt);
  CHECK(no_model.search_qbe(json{{"page_id", "pg"}, {"box", {0, 0, 5, 5}}}.dump()).status == 503);

  SearchIndex blank;
  blank.text = TextEmbedder::make(EmbeddingKind::dctow);
  blank.dim = blank.text.dim();
  CHECK(body(SearchService(blank, std::nullopt).health())["proposals"] == 0);
}

TEST_CASE("http server end to end") {
  Fixture f;
  auto svc = std::make_shared<const SearchService>(f.index, f.model);
  ServeOptions opts;
  opts.port = 0;
  HttpServer server(svc, opts);
  const int port = server.bind();
  REQUIRE(port > 0);
  std::thread t([&] { server.listen(); });

  httplib::Client cli("127.0.0.1", port);
  auto health = cli.Get("/api/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(json::parse(health->body)["pages"] == 1);

  auto search = cli.Get("/api/search?q=abc&k=3");
  REQUIRE(search);
  CHECK(search->status == 200);
  CHECK(json::parse(search->body) == json::parse(svc->search(std::string("abc"), std::string("3")).body));

  auto qbe = cli.Post("/api/search/qbe", json{{"page_id", "pg"}, {"box", {10, 10, 40, 20}}}.dump(),
                      "application/json");
  REQUIRE(qbe);
  CHECK(qbe->status == 200);

  auto image = cli.Get("/api/pages/pg/image");
  REQUIRE(image);
  CHECK(image->get_header_value("Content-Type") == "image/png");
  auto missing = cli.Get("/api/pages/none/image");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  auto root = cli.Get("/");
  REQUIRE(root);
  CHECK(root->status == 200);

  server.stop();
  t.join();
}
