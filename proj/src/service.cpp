#include "wordspot/service.hpp"

#include <charconv>
#include <cmath>

#include "httplib.h"

namespace wordspot {

using nlohmann::json;

std::array<long, 4> box_to_wire(const Box& box) {
  return {std::lround(box.x0()), std::lround(box.y0()), std::lround(box.w), std::lround(box.h)};
}

Box box_from_wire(const json& j) {
  if (!j.is_array() || j.size() != 4) {
    throw Error(ErrorCode::InvalidConfig, "box must be an array [x, y, w, h]");
  }
  std::array<double, 4> v{};
  for (std::size_t i = 0; i < 4; ++i) {
    if (!j[i].is_number_integer()) throw Error(ErrorCode::InvalidConfig, "box entries must be integers");
    v[i] = static_cast<double>(j[i].get<long>());
  }
  const auto b = Box::from_xywh(v[0], v[1], v[2], v[3]);
  if (!b.valid()) throw Error(ErrorCode::DegenerateBox, "box must have positive width and height");
  return b;
}

json hit_to_json(const Hit& hit, std::size_t rank) {
  return {{"page_id", hit.page_id}, {"box", box_to_wire(hit.box)}, {"similarity", hit.similarity}, {"rank", rank}};
}

json hits_to_json(const std::vector<Hit>& hits) {
  json arr = json::array();
  for (std::size_t i = 0; i < hits.size(); ++i) arr.push_back(hit_to_json(hits[i], i + 1));
  return {{"hits", arr}};
}

json error_json(std::string_view code, std::string_view message) {
  return {{"error", code}, {"message", message}};
}

namespace {

HttpReply json_reply(int status, const json& body) { return {status, "application/json", body.dump()}; }

HttpReply error_reply(int status, std::string_view code, std::string_view message) {
  return json_reply(status, error_json(code, message));
}

HttpReply from_error(const Error& e) {
  switch (e.code()) {
    case ErrorCode::UnknownPage:
      return error_reply(404, error_name(e.code()), e.what());
    case ErrorCode::EmptyLabel:
    case ErrorCode::DegenerateBox:
    case ErrorCode::InvalidConfig:
      return error_reply(400, error_name(e.code()), e.what());
    default:
      return error_reply(500, error_name(e.code()), e.what());
  }
}

}  // namespace

SearchService::SearchService(SearchIndex index, std::optional<TrainedModel> model)
    : index_(std::move(index)), model_(std::move(model)) {
  if (model_ && static_cast<std::size_t>(model_->net.config().out_dim) != index_.dim) {
    throw Error(ErrorCode::DimensionMismatch, "model and index embedding dimensions differ");
  }
}

HttpReply SearchService::pages() const {
  json arr = json::array();
  for (const auto& p : index_.pages) {
    arr.push_back({{"page_id", p.page_id}, {"width", p.width}, {"height", p.height}});
  }
  return json_reply(200, arr);
}

HttpReply SearchService::page_image(const std::string& page_id) const {
  const auto* page = index_.find_page(page_id);
  if (page == nullptr) return error_reply(404, "UnknownPage", "unknown page '" + page_id + "'");
  try {
    const auto png = encode_png(read_image(page->image_path));
    return {200, "image/png", std::string(png.begin(), png.end())};
  } catch (const Error& e) {
    return from_error(e);
  }
}

HttpReply SearchService::search(const std::optional<std::string>& q,
                                const std::optional<std::string>& k) const {
  if (!q) return error_reply(400, "InvalidConfig", "missing query parameter 'q'");
  std::size_t top = index_.query.k;
  if (k && !k->empty()) {
    long parsed = 0;
    const auto* end = k->data() + k->size();
    const auto [ptr, ec] = std::from_chars(k->data(), end, parsed);
    if (ec != std::errc() || ptr != end || parsed < 1) {
      return error_reply(400, "InvalidConfig", "k must be a positive integer");
    }
    top = static_cast<std::size_t>(parsed);
  }
  try {
    return json_reply(200, hits_to_json(query_by_string(index_, *q, top)));
  } catch (const Error& e) {
    return from_error(e);
  }
}

HttpReply SearchService::search_qbe(const std::string& body) const {
  json req;
  try {
    req = json::parse(body);
  } catch (const json::parse_error&) {
    return error_reply(400, "InvalidConfig", "request body is not valid JSON");
  }
  if (!req.is_object() || !req.contains("page_id") || !req["page_id"].is_string() || !req.contains("box")) {
    return error_reply(400, "InvalidConfig", "expected {page_id, box}");
  }
  std::size_t top = index_.query.k;
  if (req.contains("k")) {
    if (!req["k"].is_number_integer() || req["k"].get<long>() < 1) {
      return error_reply(400, "InvalidConfig", "k must be a positive integer");
    }
    top = req["k"].get<std::size_t>();
  }
  try {
    const auto page_id = req["page_id"].get<std::string>();
    const auto* page = index_.find_page(page_id);
    if (page == nullptr) return error_reply(404, "UnknownPage", "unknown page '" + page_id + "'");
    const Box box = box_from_wire(req["box"]);
    if (box.w > page->width || box.h > page->height) {
      return error_reply(413, "BoxTooLarge", "query box is larger than the page");
    }
    if (!model_) return error_reply(503, "NoModel", "query-by-example needs a model");
    return json_reply(200, hits_to_json(query_by_example(index_, page_id, box, *model_, top)));
  } catch (const Error& e) {
    return from_error(e);
  }
}

HttpReply SearchService::health() const {
  return json_reply(200, {{"status", "ok"},
                          {"index_version", SearchIndex::kFormatVersion},
                          {"pages", index_.pages.size()},
                          {"proposals", index_.proposal_count()}});
}

namespace {

constexpr const char* kPlaceholder =
    "<!doctype html><html><head><meta charset=\"utf-8\"><title>wordspot</title></head>"
    "<body><h1>wordspot</h1><p>No UI bundle is installed. The JSON API lives under "
    "<code>/api</code>: <code>/api/health</code>, <code>/api/pages</code>, "
    "<code>/api/search?q=word&amp;k=25</code>.</p></body></html>";

void send(httplib::Response& res, const HttpReply& r) {
  res.status = r.status;
  res.set_content(r.body, r.content_type);
}

}  // namespace

struct HttpServer::Impl {
  std::shared_ptr<const SearchService> service;
  ServeOptions opts;
  httplib::Server server;
  int port = -1;
};

HttpServer::HttpServer(std::shared_ptr<const SearchService> service, ServeOptions opts)
    : impl_(std::make_unique<Impl>()) {
  impl_->service = std::move(service);
  impl_->opts = std::move(opts);
  auto& srv = impl_->server;
  auto svc = impl_->service;

  srv.Get("/api/health", [svc](const httplib::Request&, httplib::Response& res) { send(res, svc->health()); });
  srv.Get("/api/pages", [svc](const httplib::Request&, httplib::Response& res) { send(res, svc->pages()); });
  srv.Get(R"(/api/pages/([^/]+)/image)", [svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc->page_image(req.matches[1].str()));
  });
  srv.Get("/api/search", [svc](const httplib::Request& req, httplib::Response& res) {
    auto param = [&](const char* name) -> std::optional<std::string> {
      if (!req.has_param(name)) return std::nullopt;
      return req.get_param_value(name);
    };
    send(res, svc->search(param("q"), param("k")));
  });
  srv.Post("/api/search/qbe", [svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc->search_qbe(req.body));
  });

  const auto& dir = impl_->opts.static_dir;
  if (!(dir && srv.set_mount_point("/", dir->string()))) {
    srv.Get("/", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(kPlaceholder, "text/html; charset=utf-8");
    });
  }
  srv.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (res.body.empty() && req.path.rfind("/api/", 0) == 0) {
      res.set_content(error_json("NotFound", "no such endpoint").dump(), "application/json");
    }
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
  auto& o = impl_->opts;
  if (o.port == 0) {
    impl_->port = impl_->server.bind_to_any_port(o.host);
  } else {
    impl_->port = impl_->server.bind_to_port(o.host, o.port) ? o.port : -1;
  }
  if (impl_->port < 0) {
    throw Error(ErrorCode::Io, "cannot bind " + o.host + ":" + std::to_string(o.port));
  }
  return impl_->port;
}

void HttpServer::listen() {
  if (impl_->port < 0) bind();
  impl_->server.listen_after_bind();
}

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace wordspot
