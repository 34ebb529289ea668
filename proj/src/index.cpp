#include "wordspot/index.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <optional>
#include <thread>

#include "binary_io.hpp"
#include "wordspot/errors.hpp"

namespace wordspot {

void QueryConfig::validate() const {
  if (!(t_s >= 0.0 && t_s <= 1.0) || !(t_nms >= 0.0 && t_nms <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "t_s and t_nms must lie in [0, 1]");
  }
}

nlohmann::json QueryConfig::to_json() const { return {{"t_s", t_s}, {"t_nms", t_nms}, {"k", k}}; }

QueryConfig QueryConfig::from_json(const nlohmann::json& j) {
  QueryConfig q;
  q.t_s = j.at("t_s").get<double>();
  q.t_nms = j.at("t_nms").get<double>();
  q.k = j.at("k").get<std::size_t>();
  q.validate();
  return q;
}

const PageIndex* SearchIndex::find_page(std::string_view page_id) const {
  auto it = std::lower_bound(pages.begin(), pages.end(), page_id,
                             [](const PageIndex& p, std::string_view id) { return p.page_id < id; });
  return it != pages.end() && it->page_id == page_id ? &*it : nullptr;
}

std::size_t SearchIndex::proposal_count() const {
  std::size_t n = 0;
  for (const auto& p : pages) n += p.proposals.size();
  return n;
}

namespace {

Box to_original(const Box& b, double scale) {
  return {b.x_c / scale, b.y_c / scale, b.w / scale, b.h / scale};
}

Box to_working(const Box& b, double scale) {
  return {b.x_c * scale, b.y_c * scale, b.w * scale, b.h * scale};
}

void sort_canonical(std::vector<Proposal>& props) {
  std::stable_sort(props.begin(), props.end(),
                   [](const Proposal& a, const Proposal& b) { return canonical_less(a.box, b.box); });
}

double cosine(std::span<const double> q, double q_norm, std::span<const float> d) {
  double dot = 0.0, dd = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    dot += q[i] * d[i];
    dd += static_cast<double>(d[i]) * d[i];
  }
  if (q_norm <= 0.0 || dd <= 0.0) return 0.0;
  return std::clamp(dot / (q_norm * std::sqrt(dd)), -1.0, 1.0);
}

}  // namespace

PageIndex index_page_unfiltered(const GrayImage& original, std::string page_id,
                                std::string image_path, const TrainedModel& model,
                                const DtpConfig& dtp, int working_size) {
  PageIndex page;
  page.page_id = std::move(page_id);
  page.image_path = std::move(image_path);
  page.width = original.width;
  page.height = original.height;
  const auto working = resize_longest_side(original, working_size);
  page.scale = working.scale;

  const auto boxes = dtp_proposals(working.image, dtp);
  page.n_dtp = boxes.size();
  page.n_total = boxes.size();
  const auto described = model.describe(working.image, boxes);
  page.proposals.reserve(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    page.proposals.push_back(
        {to_original(boxes[i], page.scale), described[i].wordness, described[i].descriptor});
  }
  sort_canonical(page.proposals);
  return page;
}

PageIndex filter_page(const PageIndex& page, double t_s, double t_nms) {
  PageIndex out = page;
  out.proposals.clear();
  std::vector<Box> boxes;
  std::vector<double> scores;
  std::vector<std::size_t> source;
  for (std::size_t i = 0; i < page.proposals.size(); ++i) {
    if (page.proposals[i].wordness > t_s) {
      boxes.push_back(page.proposals[i].box);
      scores.push_back(page.proposals[i].wordness);
      source.push_back(i);
    }
  }
  for (auto k : nms(boxes, scores, t_nms)) out.proposals.push_back(page.proposals[source[k]]);
  sort_canonical(out.proposals);
  return out;
}

BuildResult build_index(std::span<const PageSource> pages, const TrainedModel& model,
                        const IndexOptions& opts) {
  opts.query.validate();
  opts.dtp.validate();
  BuildResult result;
  result.index.text = model.text;
  result.index.dim = static_cast<std::size_t>(model.net.config().out_dim);
  result.index.query = opts.query;
  result.index.working_size = opts.working_size;
  if (model.text.dim() != result.index.dim) {
    throw Error(ErrorCode::DimensionMismatch, "model output does not match its text embedding");
  }

  std::vector<std::optional<PageIndex>> done(pages.size());
  std::vector<std::string> failures(pages.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < pages.size(); i = next++) {
      try {
        const auto img = read_image(pages[i].image_path);
        auto raw = index_page_unfiltered(img, pages[i].page_id, pages[i].image_path.string(),
                                         model, opts.dtp, opts.working_size);
        done[i] = filter_page(raw, opts.query.t_s, opts.query.t_nms);
      } catch (const std::exception& e) {
        failures[i] = e.what();
      }
    }
  };
  unsigned threads = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(pages.size(), 1)));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (std::size_t i = 0; i < pages.size(); ++i) {
    if (done[i]) {
      result.index.pages.push_back(std::move(*done[i]));
    } else {
      result.errors.push_back({pages[i].page_id, failures[i]});
    }
  }
  std::stable_sort(result.index.pages.begin(), result.index.pages.end(),
                   [](const PageIndex& a, const PageIndex& b) { return a.page_id < b.page_id; });
  return result;
}

std::vector<Hit> search(const SearchIndex& index, std::span<const double> query, std::size_t k) {
  if (query.size() != index.dim) {
    throw Error(ErrorCode::DimensionMismatch, "query dimension does not match the index");
  }
  double qn = 0.0;
  for (double v : query) qn += v * v;
  qn = std::sqrt(qn);
  if (qn <= 0.0) throw Error(ErrorCode::ZeroVector, "query embedding is zero");

  std::vector<Hit> hits;
  for (const auto& page : index.pages) {
    std::vector<Box> boxes;
    std::vector<double> sims;
    boxes.reserve(page.proposals.size());
    sims.reserve(page.proposals.size());
    for (const auto& p : page.proposals) {
      boxes.push_back(p.box);
      sims.push_back(cosine(query, qn, p.descriptor));
    }
    for (auto i : nms(boxes, sims, 0.0)) hits.push_back({page.page_id, boxes[i], sims[i]});
  }
  std::stable_sort(hits.begin(), hits.end(),
                   [](const Hit& a, const Hit& b) { return a.similarity > b.similarity; });
  if (k > 0 && hits.size() > k) hits.resize(k);
  return hits;
}

std::vector<Hit> query_by_string(const SearchIndex& index, std::string_view text, std::size_t k) {
  const auto q = index.text.embed(text);
  return search(index, q.values, k);
}

GrayImage load_working_image(const SearchIndex& index, const PageIndex& page) {
  return resize_longest_side(read_image(page.image_path), index.working_size).image;
}

std::vector<double> describe_region(const SearchIndex& index, const PageIndex& page,
                                    const GrayImage& working, const Box& box,
                                    const TrainedModel& model) {
  if (!box.valid()) throw Error(ErrorCode::DegenerateBox, "query box has non-positive size");
  if (static_cast<std::size_t>(model.net.config().out_dim) != index.dim) {
    throw Error(ErrorCode::DimensionMismatch, "model does not match the index");
  }
  const Box region = to_working(box, page.scale);
  const auto desc = model.describe(working, std::span<const Box>(&region, 1));
  return {desc[0].descriptor.begin(), desc[0].descriptor.end()};
}

std::vector<Hit> query_by_example(const SearchIndex& index, std::string_view page_id,
                                  const Box& box, const TrainedModel& model, std::size_t k) {
  const auto* page = index.find_page(page_id);
  if (page == nullptr) throw Error(ErrorCode::UnknownPage, "unknown page '" + std::string(page_id) + "'");
  if (!box.valid()) throw Error(ErrorCode::DegenerateBox, "query box has non-positive size");
  const auto working = load_working_image(index, *page);
  return search(index, describe_region(index, *page, working, box, model), k);
}

namespace {

constexpr char kIndexMagic[] = "WSIX";

nlohmann::json index_header(const SearchIndex& index) {
  return {{"embedding", index.text.to_json()},
          {"dim", index.dim},
          {"query", index.query.to_json()},
          {"working_size", index.working_size}};
}

}  // namespace

std::vector<std::uint8_t> serialize_index(const SearchIndex& index) {
  detail::ByteWriter w;
  w.raw(std::string_view(kIndexMagic, 4));
  w.u32(SearchIndex::kFormatVersion);
  w.str(to_string(index.text.kind()));
  w.u32(static_cast<std::uint32_t>(index.dim));
  w.str(index_header(index).dump());
  w.u32(static_cast<std::uint32_t>(index.pages.size()));
  for (const auto& page : index.pages) {
    w.str(page.page_id);
    w.str(page.image_path);
    w.u32(static_cast<std::uint32_t>(page.width));
    w.u32(static_cast<std::uint32_t>(page.height));
    w.f64(page.scale);
    w.u64(page.n_dtp);
    w.u64(page.n_total);
    w.u32(static_cast<std::uint32_t>(page.proposals.size()));
    for (const auto& p : page.proposals) {
      if (p.descriptor.size() != index.dim) {
        throw Error(ErrorCode::DimensionMismatch, "descriptor size does not match the index");
      }
      w.f64(p.box.x_c);
      w.f64(p.box.y_c);
      w.f64(p.box.w);
      w.f64(p.box.h);
      w.f64(p.wordness);
      for (float v : p.descriptor) w.f32(v);
    }
  }
  w.crc_trailer();
  return std::move(w.data());
}

SearchIndex deserialize_index(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::string_view(reinterpret_cast<const char*>(bytes.data()), 4) !=
                              std::string_view(kIndexMagic, 4)) {
    throw Error(ErrorCode::CorruptIndex, "not an index file (bad magic)");
  }
  detail::ByteReader head(bytes.subspan(4, 4), ErrorCode::CorruptIndex);
  const auto version = head.u32();
  if (version != SearchIndex::kFormatVersion) {
    throw Error(ErrorCode::VersionMismatch,
                "index format version " + std::to_string(version) + " is not supported");
  }
  const auto body = detail::verify_crc_trailer(bytes, ErrorCode::CorruptIndex);
  detail::ByteReader rd(body.subspan(8), ErrorCode::CorruptIndex);

  SearchIndex index;
  const auto kind = rd.str();
  index.dim = rd.u32();
  try {
    const auto header = nlohmann::json::parse(rd.str());
    index.text = TextEmbedder::from_json(header.at("embedding"));
    index.query = QueryConfig::from_json(header.at("query"));
    index.working_size = header.at("working_size").get<int>();
    if (header.at("dim").get<std::size_t>() != index.dim ||
        std::string(to_string(index.text.kind())) != kind) {
      throw Error(ErrorCode::CorruptIndex, "index header fields disagree");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptIndex, std::string("bad index header: ") + e.what());
  }
  const auto n_pages = rd.u32();
  for (std::uint32_t i = 0; i < n_pages; ++i) {
    PageIndex page;
    page.page_id = rd.str();
    page.image_path = rd.str();
    page.width = static_cast<int>(rd.u32());
    page.height = static_cast<int>(rd.u32());
    page.scale = rd.f64();
    page.n_dtp = rd.u64();
    page.n_total = rd.u64();
    const auto n_props = rd.u32();
    if (static_cast<std::size_t>(n_props) * (40 + 4 * index.dim) > rd.remaining()) {
      throw Error(ErrorCode::CorruptIndex, "proposal block is truncated");
    }
    page.proposals.resize(n_props);
    for (auto& p : page.proposals) {
      p.box.x_c = rd.f64();
      p.box.y_c = rd.f64();
      p.box.w = rd.f64();
      p.box.h = rd.f64();
      p.wordness = rd.f64();
      p.descriptor.resize(index.dim);
      for (auto& v : p.descriptor) v = rd.f32();
    }
    index.pages.push_back(std::move(page));
  }
  if (rd.remaining() != 0) throw Error(ErrorCode::CorruptIndex, "trailing bytes in index");
  return index;
}

void save_index(const SearchIndex& index, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_index(index));
}

SearchIndex load_index(const std::filesystem::path& path) {
  return deserialize_index(read_file_bytes(path));
}

}  // namespace wordspot
