#include <algorithm>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include <png.h>

#include "wordspot/errors.hpp"
#include "wordspot/image.hpp"

namespace wordspot {

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string pgm_token(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(bytes[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string token;
  while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#') {
    token.push_back(static_cast<char>(bytes[pos++]));
  }
  return token;
}

int pgm_int(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  const auto token = pgm_token(bytes, pos);
  if (token.empty() || token.size() > 9 ||
      !std::all_of(token.begin(), token.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
    throw Error(ErrorCode::ImageDecode, "malformed PGM header");
  }
  return std::stoi(token);
}

}  // namespace

std::vector<std::uint8_t> encode_pgm(const GrayImage& img) {
  const std::string header =
      "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

GrayImage decode_pgm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  if (pgm_token(bytes, pos) != "P5") throw Error(ErrorCode::ImageDecode, "not a binary PGM (P5)");
  const int w = pgm_int(bytes, pos);
  const int h = pgm_int(bytes, pos);
  const int maxval = pgm_int(bytes, pos);
  if (w <= 0 || h <= 0) throw Error(ErrorCode::ImageDecode, "PGM has empty dimensions");
  if (maxval != 255) throw Error(ErrorCode::ImageDecode, "only 8-bit PGM (maxval 255) is supported");
  ++pos;  // single whitespace byte before the raster
  const auto n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (pos > bytes.size() || bytes.size() - pos < n) {
    throw Error(ErrorCode::ImageDecode, "PGM raster is truncated");
  }
  GrayImage img(w, h);
  std::memcpy(img.pixels.data(), bytes.data() + pos, n);
  return img;
}

std::vector<std::uint8_t> encode_png(const GrayImage& img) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_GRAY;

  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.pixels.data(), 0, nullptr)) {
    throw Error(ErrorCode::ImageDecode, std::string("PNG encode failed: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.pixels.data(), 0, nullptr)) {
    throw Error(ErrorCode::ImageDecode, std::string("PNG encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

GrayImage decode_png(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw Error(ErrorCode::ImageDecode, std::string("PNG decode failed: ") + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  GrayImage img(static_cast<int>(image.width), static_cast<int>(image.height));
  if (!png_image_finish_read(&image, nullptr, img.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error(ErrorCode::ImageDecode, std::string("PNG decode failed: ") + image.message);
  }
  return img;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

GrayImage read_image(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  static constexpr std::uint8_t kPngMagic[] = {0x89, 'P', 'N', 'G'};
  if (bytes.size() >= 4 && std::equal(std::begin(kPngMagic), std::end(kPngMagic), bytes.begin())) {
    return decode_png(bytes);
  }
  return decode_pgm(bytes);
}

void write_image(const std::filesystem::path& path, const GrayImage& img) {
  const auto ext = path.extension().string();
  write_file_bytes(path, ext == ".png" || ext == ".PNG" ? encode_png(img) : encode_pgm(img));
}

}  // namespace wordspot
