#pragma once

#include "densefit/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace densefit {

/// 8-bit binary PPM (P6); channels in [0,1] are scaled by 255 and rounded.
std::string encode_ppm(const RgbImage& image);
void write_ppm(const RgbImage& image, const std::filesystem::path& path);
RgbImage read_ppm(const std::filesystem::path& path);

/// 16-bit binary PGM (P5, maxval 65535, big-endian samples).
std::string encode_pgm16(const Grid<std::uint16_t>& image);
void write_pgm16(const Grid<std::uint16_t>& image, const std::filesystem::path& path);

/// Depth in millimeters (clamped to 65535, 0 where invalid).
Grid<std::uint16_t> depth_to_u16(const Grid<double>& depth, const Mask& mask);
/// 65535 where valid, 0 elsewhere.
Grid<std::uint16_t> mask_to_u16(const Mask& mask);

}  // namespace densefit
