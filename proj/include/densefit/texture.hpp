#pragma once

#include "densefit/body_model.hpp"
#include "densefit/camera.hpp"
#include "densefit/types.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace densefit {

/// Per-vertex colors in [0,1]. coverage[i] == 0 exactly when sample_count[i] == 0.
struct VertexTexture {
  Points3 colors;
  std::vector<int> sample_count;
  std::vector<std::uint8_t> coverage;

  int size() const { return static_cast<int>(colors.rows()); }
};

void validate(const VertexTexture& texture);

/// Uniform texture with full coverage.
VertexTexture solid_texture(int vertex_count, const Vec3& color);

struct TextureFrame {
  RgbImage image;
  BodyParams params;
  Camera camera;
};

using ColorSamples = std::vector<std::vector<Vec3>>;

/// Samples each frame at the nearest pixel of every vertex with positive
/// visibility mass. Projections outside the image are skipped.
ColorSamples backproject(const std::vector<TextureFrame>& frames, const BodyModelSpec& model,
                         const ForwardOptions& options = {});

/// Per-channel median (lower median for even counts); uncovered vertices are
/// mid-gray with coverage 0.
VertexTexture median_texture(const ColorSamples& samples);

enum class TexturePerturbation { None, Noise, Brightness, Swap };

/// Noise and brightness magnitudes are standard deviations on a 0-255 scale.
/// Swap replaces the texture with `other` and ignores the magnitude.
VertexTexture perturb_texture(const VertexTexture& texture, TexturePerturbation mode, double magnitude,
                              std::uint64_t seed, const VertexTexture* other = nullptr);

/// Adds `offset` (0-255 scale) to every channel, then clamps to [0,1].
VertexTexture apply_brightness(const VertexTexture& texture, double offset);

/// JSON with header N and arrays colors (N×3) and coverage (N).
void save_texture(const VertexTexture& texture, const std::filesystem::path& path);
VertexTexture load_texture(const std::filesystem::path& path);

}  // namespace densefit
