#include "densefit/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace densefit {

namespace {

void write_bytes(const std::string& bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

std::string encode_ppm(const RgbImage& image) {
  std::ostringstream out;
  out << "P6\n" << image.width() << ' ' << image.height() << "\n255\n";
  std::string bytes = out.str();
  bytes.reserve(bytes.size() + image.size() * 3);
  for (const Vec3& px : image.data()) {
    for (int c = 0; c < 3; ++c) bytes.push_back(static_cast<char>(to_u8(px[c])));
  }
  return bytes;
}

void write_ppm(const RgbImage& image, const std::filesystem::path& path) {
  write_bytes(encode_ppm(image), path);
}

RgbImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || w < 1 || h < 1 || maxval != 255) {
    throw ParseError(path.string() + ": only 8-bit P6 images are supported");
  }
  in.get();
  std::string bytes(static_cast<std::size_t>(w) * h * 3, '\0');
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw ParseError(path.string() + ": truncated pixel data");
  }
  RgbImage img(w, h);
  for (std::size_t i = 0; i < img.size(); ++i) {
    for (int c = 0; c < 3; ++c) img[i][c] = static_cast<unsigned char>(bytes[3 * i + c]) / 255.0;
  }
  return img;
}

std::string encode_pgm16(const Grid<std::uint16_t>& image) {
  std::ostringstream out;
  out << "P5\n" << image.width() << ' ' << image.height() << "\n65535\n";
  std::string bytes = out.str();
  for (std::uint16_t v : image.data()) {
    bytes.push_back(static_cast<char>(v >> 8));
    bytes.push_back(static_cast<char>(v & 0xff));
  }
  return bytes;
}

void write_pgm16(const Grid<std::uint16_t>& image, const std::filesystem::path& path) {
  write_bytes(encode_pgm16(image), path);
}

Grid<std::uint16_t> depth_to_u16(const Grid<double>& depth, const Mask& mask) {
  Grid<std::uint16_t> out(depth.width(), depth.height(), 0);
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (!mask[i]) continue;
    out[i] = static_cast<std::uint16_t>(std::clamp(std::lround(depth[i] * 1000.0), 0L, 65535L));
  }
  return out;
}

Grid<std::uint16_t> mask_to_u16(const Mask& mask) {
  Grid<std::uint16_t> out(mask.width(), mask.height(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] ? 65535 : 0;
  return out;
}

}  // namespace densefit
