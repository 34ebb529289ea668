#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "wordspot/geometry.hpp"

namespace wordspot {

/// 8-bit grayscale raster, row-major; 0 is black ink, 255 is white paper.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 255)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

  bool empty() const noexcept { return pixels.empty(); }
  std::uint8_t at(int x, int y) const { return pixels[index(x, y)]; }
  std::uint8_t& at(int x, int y) { return pixels[index(x, y)]; }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x);
  }

  bool operator==(const GrayImage&) const = default;
};

/// Foreground mask; 1 marks ink.
struct BinaryImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  BinaryImage() = default;
  BinaryImage(int w, int h)
      : width(w), height(h), bits(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0) {}

  std::uint8_t at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;

  bool operator==(const BinaryImage&) const = default;
};

/// Rectangular element; both sides odd so the window is centred.
struct StructuringElement {
  int w = 1;
  int h = 1;

  void validate() const;
  bool operator==(const StructuringElement&) const = default;
};

double mean_intensity(const GrayImage& img);
std::uint8_t median_intensity(const GrayImage& img);

/// Bilinear resampling with pixel centres at integer + 1/2.
GrayImage resize_bilinear(const GrayImage& img, int out_w, int out_h);

struct ResizedImage {
  GrayImage image;
  double scale = 1.0;  // working pixels per original pixel
};

ResizedImage resize_longest_side(const GrayImage& img, int target);

/// Foreground iff intensity < t.
BinaryImage threshold(const GrayImage& img, double t);

/// Everything outside the raster counts as background.
BinaryImage binary_dilate(const BinaryImage& img, const StructuringElement& se);
BinaryImage binary_erode(const BinaryImage& img, const StructuringElement& se);
/// Closing over the unbounded plane restricted back to the raster, so it is
/// extensive and idempotent even for ink touching the border.
BinaryImage binary_close(const BinaryImage& img, const StructuringElement& se);

/// Grayscale morphology with replicated borders. Ink is dark, so dilation is
/// the local minimum and erosion the local maximum.
GrayImage gray_dilate(const GrayImage& img, const StructuringElement& se);
GrayImage gray_erode(const GrayImage& img, const StructuringElement& se);

struct Component {
  Box box;  // tight pixel bounds
  std::size_t area = 0;
};

/// 8-connected foreground components ordered by (top, left).
std::vector<Component> connected_components(const BinaryImage& img);

/// Row-major out_h x out_w samples with values in [0, 1].
struct Patch {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;

  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
};

/// Samples output pixel centres mapped affinely into `box`; samples falling
/// outside the raster clamp to the nearest valid pixel.
Patch bilinear_roi_resize(const GrayImage& img, const Box& box, int out_w, int out_h);

/// Horizontal shear about the image centre; uncovered pixels take the median
/// intensity. Output has the input's size.
GrayImage shear(const GrayImage& img, double angle_degrees);
GrayImage shear(const GrayImage& img, double angle_degrees, std::uint8_t fill);

GrayImage crop(const GrayImage& img, int x, int y, int w, int h);
void paste(GrayImage& dst, const GrayImage& src, int x, int y);

// Codecs. PGM is binary P5 with maxval 255; PNG is 8-bit grayscale (other
// PNG colour types are converted to luma on read).
std::vector<std::uint8_t> encode_pgm(const GrayImage& img);
GrayImage decode_pgm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const GrayImage& img);
GrayImage decode_png(std::span<const std::uint8_t> bytes);

/// Dispatches on file content, not extension.
GrayImage read_image(const std::filesystem::path& path);
/// Picks the codec from the extension (.png, otherwise PGM).
void write_image(const std::filesystem::path& path, const GrayImage& img);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace wordspot
