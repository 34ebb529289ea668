#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "wordspot/embedder.hpp"
#include "wordspot/errors.hpp"
#include "wordspot/index.hpp"

namespace wordspot {

/// Corner-form integer [x, y, w, h] in original page pixels.
std::array<long, 4> box_to_wire(const Box& box);
Box box_from_wire(const nlohmann::json& j);

nlohmann::json hit_to_json(const Hit& hit, std::size_t rank);
nlohmann::json hits_to_json(const std::vector<Hit>& hits);
nlohmann::json error_json(std::string_view code, std::string_view message);

struct HttpReply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Request handling over an immutable index, independent of the transport.
class SearchService {
 public:
  SearchService(SearchIndex index, std::optional<TrainedModel> model);

  HttpReply pages() const;
  HttpReply page_image(const std::string& page_id) const;
  /// `k` is the raw query parameter; empty means the index default.
  HttpReply search(const std::optional<std::string>& q, const std::optional<std::string>& k) const;
  HttpReply search_qbe(const std::string& body) const;
  HttpReply health() const;

  const SearchIndex& index() const noexcept { return index_; }

 private:
  SearchIndex index_;
  std::optional<TrainedModel> model_;
};

struct ServeOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::optional<std::filesystem::path> static_dir;
};

class HttpServer {
 public:
  HttpServer(std::shared_ptr<const SearchService> service, ServeOptions opts);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds the socket; returns the bound port.
  int bind();
  /// Serves until stop() is called.
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace wordspot
