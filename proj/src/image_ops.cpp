#include <algorithm>
#include <array>
#include <climits>
#include <cstdint>
#include <cmath>
#include <numbers>
#include <numeric>

#include "wordspot/errors.hpp"
#include "wordspot/image.hpp"

namespace wordspot {

std::size_t BinaryImage::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

void StructuringElement::validate() const {
  if (w < 1 || h < 1 || w % 2 == 0 || h % 2 == 0) {
    throw Error(ErrorCode::InvalidConfig, "structuring element sides must be odd and positive");
  }
}

double mean_intensity(const GrayImage& img) {
  if (img.empty()) return 0.0;
  const auto sum = std::accumulate(img.pixels.begin(), img.pixels.end(), std::uint64_t{0});
  return static_cast<double>(sum) / static_cast<double>(img.pixels.size());
}

std::uint8_t median_intensity(const GrayImage& img) {
  if (img.empty()) return 255;
  std::array<std::size_t, 256> hist{};
  for (auto p : img.pixels) ++hist[p];
  const std::size_t half = (img.pixels.size() + 1) / 2;
  std::size_t seen = 0;
  for (int v = 0; v < 256; ++v) {
    seen += hist[static_cast<std::size_t>(v)];
    if (seen >= half) return static_cast<std::uint8_t>(v);
  }
  return 255;
}

namespace {

std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

// Bilinear lookup at continuous pixel-index coordinates (u, v), where integer
// values hit pixel centres. Coordinates clamp to the raster.
double sample_bilinear(const GrayImage& img, double u, double v) {
  u = std::clamp(u, 0.0, static_cast<double>(img.width - 1));
  v = std::clamp(v, 0.0, static_cast<double>(img.height - 1));
  const int x0 = static_cast<int>(std::floor(u));
  const int y0 = static_cast<int>(std::floor(v));
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double fx = u - x0;
  const double fy = v - y0;
  const double top = img.at(x0, y0) * (1.0 - fx) + img.at(x1, y0) * fx;
  const double bottom = img.at(x0, y1) * (1.0 - fx) + img.at(x1, y1) * fx;
  return top * (1.0 - fy) + bottom * fy;
}

// Window counts along rows: out[x] = number of set pixels in [x-r, x+r].
void row_window_counts(const std::uint8_t* row, int n, int r, std::vector<int>& prefix,
                       std::vector<int>& out) {
  prefix.assign(static_cast<std::size_t>(n) + 1, 0);
  for (int x = 0; x < n; ++x) prefix[x + 1] = prefix[x] + row[x];
  out.resize(static_cast<std::size_t>(n));
  for (int x = 0; x < n; ++x) {
    const int lo = std::max(0, x - r);
    const int hi = std::min(n, x + r + 1);
    out[x] = prefix[hi] - prefix[lo];
  }
}

enum class MorphOp { dilate, erode };

BinaryImage binary_morph(const BinaryImage& img, const StructuringElement& se, MorphOp op) {
  se.validate();
  const int W = img.width;
  const int H = img.height;
  const int rx = se.w / 2;
  const int ry = se.h / 2;
  BinaryImage tmp(W, H);
  std::vector<int> prefix;
  std::vector<int> counts;
  for (int y = 0; y < H; ++y) {
    row_window_counts(&img.bits[static_cast<std::size_t>(y) * W], W, rx, prefix, counts);
    for (int x = 0; x < W; ++x) {
      tmp.at(x, y) = op == MorphOp::dilate ? counts[x] > 0 : counts[x] == se.w;
    }
  }
  BinaryImage out(W, H);
  std::vector<int> colsum(static_cast<std::size_t>(W), 0);
  // Sliding vertical window, one row in and one row out per step.
  for (int y = 0; y < std::min(ry, H); ++y)
    for (int x = 0; x < W; ++x) colsum[x] += tmp.at(x, y);
  for (int y = 0; y < H; ++y) {
    if (y + ry < H)
      for (int x = 0; x < W; ++x) colsum[x] += tmp.at(x, y + ry);
    if (y - ry - 1 >= 0)
      for (int x = 0; x < W; ++x) colsum[x] -= tmp.at(x, y - ry - 1);
    for (int x = 0; x < W; ++x) {
      out.at(x, y) = op == MorphOp::dilate ? colsum[x] > 0 : colsum[x] == se.h;
    }
  }
  return out;
}

GrayImage gray_morph(const GrayImage& img, const StructuringElement& se, bool take_min) {
  se.validate();
  const int W = img.width;
  const int H = img.height;
  const int rx = se.w / 2;
  const int ry = se.h / 2;
  auto pick = [take_min](std::uint8_t a, std::uint8_t b) {
    return take_min ? std::min(a, b) : std::max(a, b);
  };
  GrayImage tmp(W, H);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      std::uint8_t v = img.at(x, y);
      for (int d = -rx; d <= rx; ++d) v = pick(v, img.at(std::clamp(x + d, 0, W - 1), y));
      tmp.at(x, y) = v;
    }
  }
  GrayImage out(W, H);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      std::uint8_t v = tmp.at(x, y);
      for (int d = -ry; d <= ry; ++d) v = pick(v, tmp.at(x, std::clamp(y + d, 0, H - 1)));
      out.at(x, y) = v;
    }
  }
  return out;
}

}  // namespace

GrayImage resize_bilinear(const GrayImage& img, int out_w, int out_h) {
  if (out_w <= 0 || out_h <= 0 || img.empty()) {
    throw Error(ErrorCode::InvalidConfig, "resize needs a non-empty image and positive size");
  }
  GrayImage out(out_w, out_h);
  const double sx = static_cast<double>(img.width) / out_w;
  const double sy = static_cast<double>(img.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double v = (y + 0.5) * sy - 0.5;
    for (int x = 0; x < out_w; ++x) {
      out.at(x, y) = to_u8(sample_bilinear(img, (x + 0.5) * sx - 0.5, v));
    }
  }
  return out;
}

ResizedImage resize_longest_side(const GrayImage& img, int target) {
  if (target <= 0) throw Error(ErrorCode::InvalidConfig, "resize target must be positive");
  const int longest = std::max(img.width, img.height);
  if (longest == target) return {img, 1.0};
  const double scale = static_cast<double>(target) / longest;
  int w = std::max(1, static_cast<int>(std::lround(img.width * scale)));
  int h = std::max(1, static_cast<int>(std::lround(img.height * scale)));
  if (img.width >= img.height) {
    w = target;
  } else {
    h = target;
  }
  return {resize_bilinear(img, w, h), scale};
}

BinaryImage threshold(const GrayImage& img, double t) {
  BinaryImage out(img.width, img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) out.bits[i] = img.pixels[i] < t;
  return out;
}

BinaryImage binary_dilate(const BinaryImage& img, const StructuringElement& se) {
  return binary_morph(img, se, MorphOp::dilate);
}

BinaryImage binary_erode(const BinaryImage& img, const StructuringElement& se) {
  return binary_morph(img, se, MorphOp::erode);
}

BinaryImage binary_close(const BinaryImage& img, const StructuringElement& se) {
  se.validate();
  if (se.w == 1 && se.h == 1) return img;
  const int rx = se.w / 2;
  const int ry = se.h / 2;
  BinaryImage padded(img.width + 2 * rx, img.height + 2 * ry);
  for (int y = 0; y < img.height; ++y) {
    std::copy_n(&img.bits[static_cast<std::size_t>(y) * img.width], img.width,
                &padded.bits[static_cast<std::size_t>(y + ry) * padded.width + rx]);
  }
  const auto closed = binary_erode(binary_dilate(padded, se), se);
  BinaryImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    std::copy_n(&closed.bits[static_cast<std::size_t>(y + ry) * closed.width + rx], img.width,
                &out.bits[static_cast<std::size_t>(y) * img.width]);
  }
  return out;
}

GrayImage gray_dilate(const GrayImage& img, const StructuringElement& se) {
  return gray_morph(img, se, true);
}

GrayImage gray_erode(const GrayImage& img, const StructuringElement& se) {
  return gray_morph(img, se, false);
}

std::vector<Component> connected_components(const BinaryImage& img) {
  struct Run {
    int y, xs, xe;  // inclusive
  };
  std::vector<Run> runs;
  std::vector<std::size_t> row_start(static_cast<std::size_t>(img.height) + 1, 0);
  for (int y = 0; y < img.height; ++y) {
    row_start[y] = runs.size();
    const std::uint8_t* row = &img.bits[static_cast<std::size_t>(y) * img.width];
    int x = 0;
    while (x < img.width) {
      if (!row[x]) {
        ++x;
        continue;
      }
      const int xs = x;
      while (x < img.width && row[x]) ++x;
      runs.push_back({y, xs, x - 1});
    }
  }
  row_start[img.height] = runs.size();

  std::vector<std::size_t> parent(runs.size());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&parent](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  auto unite = [&](std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  };

  for (int y = 1; y < img.height; ++y) {
    std::size_t i = row_start[y - 1];
    const std::size_t i_end = row_start[y];
    for (std::size_t j = row_start[y]; j < row_start[y + 1]; ++j) {
      // Runs above that end left of this run's reach can never touch later runs.
      while (i < i_end && runs[i].xe + 1 < runs[j].xs) ++i;
      for (std::size_t k = i; k < i_end && runs[k].xs <= runs[j].xe + 1; ++k) unite(j, k);
    }
  }

  // Roots are the lowest run index in each set, i.e. first in scan order.
  std::vector<std::size_t> slot(runs.size(), SIZE_MAX);
  std::vector<Component> comps;
  struct Extent {
    int x0, y0, x1, y1;
  };
  std::vector<Extent> ext;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const auto root = find(r);
    if (slot[root] == SIZE_MAX) {
      slot[root] = comps.size();
      comps.push_back({});
      ext.push_back({runs[r].xs, runs[r].y, runs[r].xe, runs[r].y});
    }
    const auto c = slot[root];
    auto& e = ext[c];
    e.x0 = std::min(e.x0, runs[r].xs);
    e.x1 = std::max(e.x1, runs[r].xe);
    e.y1 = std::max(e.y1, runs[r].y);
    comps[c].area += static_cast<std::size_t>(runs[r].xe - runs[r].xs + 1);
  }
  for (std::size_t c = 0; c < comps.size(); ++c) {
    comps[c].box = Box::from_corners(ext[c].x0, ext[c].y0, ext[c].x1 + 1, ext[c].y1 + 1);
  }
  std::stable_sort(comps.begin(), comps.end(), [](const Component& a, const Component& b) {
    if (a.box.y0() != b.box.y0()) return a.box.y0() < b.box.y0();
    return a.box.x0() < b.box.x0();
  });
  return comps;
}

Patch bilinear_roi_resize(const GrayImage& img, const Box& box, int out_w, int out_h) {
  if (!box.valid()) throw Error(ErrorCode::DegenerateBox, "roi box has non-positive size");
  if (out_w <= 0 || out_h <= 0 || img.empty()) {
    throw Error(ErrorCode::InvalidConfig, "roi resize needs a non-empty image and output size");
  }
  Patch patch{out_h, out_w, std::vector<double>(static_cast<std::size_t>(out_w) * out_h)};
  const double sx = box.w / out_w;
  const double sy = box.h / out_h;
  const double x0 = box.x0();
  const double y0 = box.y0();
  for (int r = 0; r < out_h; ++r) {
    const double v = y0 + (r + 0.5) * sy - 0.5;
    for (int c = 0; c < out_w; ++c) {
      const double u = x0 + (c + 0.5) * sx - 0.5;
      patch.values[static_cast<std::size_t>(r) * out_w + c] = sample_bilinear(img, u, v) / 255.0;
    }
  }
  return patch;
}

GrayImage shear(const GrayImage& img, double angle_degrees) {
  return shear(img, angle_degrees, img.empty() ? std::uint8_t{255} : median_intensity(img));
}

GrayImage shear(const GrayImage& img, double angle_degrees, std::uint8_t fill) {
  if (img.empty() || angle_degrees == 0.0) return img;
  const double slope = std::tan(angle_degrees * std::numbers::pi / 180.0);
  const double cy = img.height / 2.0;
  GrayImage out(img.width, img.height, fill);
  for (int y = 0; y < img.height; ++y) {
    const double shift = slope * (y + 0.5 - cy);
    for (int x = 0; x < img.width; ++x) {
      const double u = x + shift;
      if (u < -0.5 || u > img.width - 0.5) continue;
      out.at(x, y) = to_u8(sample_bilinear(img, u, y));
    }
  }
  return out;
}

GrayImage crop(const GrayImage& img, int x, int y, int w, int h) {
  GrayImage out(std::max(w, 0), std::max(h, 0), 255);
  for (int yy = 0; yy < out.height; ++yy) {
    for (int xx = 0; xx < out.width; ++xx) {
      const int sx = std::clamp(x + xx, 0, img.width - 1);
      const int sy = std::clamp(y + yy, 0, img.height - 1);
      out.at(xx, yy) = img.at(sx, sy);
    }
  }
  return out;
}

void paste(GrayImage& dst, const GrayImage& src, int x, int y) {
  for (int yy = 0; yy < src.height; ++yy) {
    const int dy = y + yy;
    if (dy < 0 || dy >= dst.height) continue;
    for (int xx = 0; xx < src.width; ++xx) {
      const int dx = x + xx;
      if (dx < 0 || dx >= dst.width) continue;
      dst.at(dx, dy) = src.at(xx, yy);
    }
  }
}

}  // namespace wordspot
