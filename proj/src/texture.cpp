#include "densefit/texture.hpp"

#include "densefit/rasterizer.hpp"
#include "json_arrays.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace densefit {

void validate(const VertexTexture& texture) {
  const auto n = static_cast<std::size_t>(texture.colors.rows());
  if (texture.sample_count.size() != n || texture.coverage.size() != n) {
    throw DimensionError("texture arrays differ in length");
  }
  if (n > 0 && (texture.colors.minCoeff() < 0.0 || texture.colors.maxCoeff() > 1.0)) {
    throw InvariantError("texture colors must lie in [0,1]");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if ((texture.coverage[i] != 0) != (texture.sample_count[i] > 0)) {
      throw InvariantError("texture coverage must be 1 exactly where samples exist");
    }
  }
}

VertexTexture solid_texture(int vertex_count, const Vec3& color) {
  VertexTexture t;
  t.colors = color.transpose().replicate(vertex_count, 1);
  t.sample_count.assign(static_cast<std::size_t>(vertex_count), 1);
  t.coverage.assign(static_cast<std::size_t>(vertex_count), 1);
  return t;
}

ColorSamples backproject(const std::vector<TextureFrame>& frames, const BodyModelSpec& model,
                         const ForwardOptions& options) {
  if (frames.empty()) throw EmptyDomainError("backproject needs at least one frame");
  const int n = model.vertex_count();
  ColorSamples samples(static_cast<std::size_t>(n));
  for (const auto& frame : frames) {
    const int w = frame.image.width();
    const int h = frame.image.height();
    const Points3 mesh = forward(model, frame.params, options);
    const RenderBuffers buffers = rasterize(mesh, model.faces, frame.camera, w, h);
    const VertexVisibility vis = vertex_visibility(buffers, model.faces, n);
    const Projection proj = project(frame.camera, mesh);
    for (int i = 0; i < n; ++i) {
      if (!vis.visible[i] || !proj.valid[i]) continue;
      const double u = std::floor(proj.pixels(i, 0));
      const double v = std::floor(proj.pixels(i, 1));
      if (u < 0 || v < 0 || u >= w || v >= h) continue;
      samples[i].push_back(frame.image(static_cast<int>(u), static_cast<int>(v)));
    }
  }
  return samples;
}

VertexTexture median_texture(const ColorSamples& samples) {
  const auto n = samples.size();
  VertexTexture t;
  t.colors = Points3::Constant(static_cast<Eigen::Index>(n), 3, 0.5);
  t.sample_count.assign(n, 0);
  t.coverage.assign(n, 0);
  std::vector<double> channel;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = samples[i];
    if (s.empty()) continue;
    t.sample_count[i] = static_cast<int>(s.size());
    t.coverage[i] = 1;
    const std::size_t mid = (s.size() - 1) / 2;
    for (int c = 0; c < 3; ++c) {
      channel.clear();
      for (const auto& color : s) channel.push_back(color[c]);
      std::nth_element(channel.begin(), channel.begin() + static_cast<std::ptrdiff_t>(mid), channel.end());
      t.colors(static_cast<Eigen::Index>(i), c) = channel[mid];
    }
  }
  return t;
}

VertexTexture apply_brightness(const VertexTexture& texture, double offset) {
  VertexTexture out = texture;
  out.colors = (texture.colors.array() + offset / 255.0).cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

VertexTexture perturb_texture(const VertexTexture& texture, TexturePerturbation mode, double magnitude,
                              std::uint64_t seed, const VertexTexture* other) {
  if (magnitude < 0.0) throw InvariantError("perturbation magnitude must be non-negative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  switch (mode) {
    case TexturePerturbation::None:
      return texture;
    case TexturePerturbation::Noise: {
      VertexTexture out = texture;
      if (magnitude == 0.0) return out;
      for (Eigen::Index i = 0; i < out.colors.rows(); ++i)
        for (int c = 0; c < 3; ++c)
          out.colors(i, c) = std::clamp(out.colors(i, c) + magnitude * normal(rng) / 255.0, 0.0, 1.0);
      return out;
    }
    case TexturePerturbation::Brightness:
      if (magnitude == 0.0) return texture;
      return apply_brightness(texture, magnitude * normal(rng));
    case TexturePerturbation::Swap:
      if (!other) throw InvariantError("texture swap needs a replacement texture");
      if (other->size() != texture.size()) throw DimensionError("swapped texture has a different vertex count");
      return *other;
  }
  return texture;
}

using detail::json;

void save_texture(const VertexTexture& texture, const std::filesystem::path& path) {
  validate(texture);
  json doc;
  doc["N"] = texture.size();
  doc["colors"] = detail::flatten(texture.colors);
  doc["coverage"] = texture.coverage;
  doc["sample_count"] = texture.sample_count;
  detail::write_json_file(path, doc);
}

VertexTexture load_texture(const std::filesystem::path& path) {
  const json doc = detail::read_json_file(path);
  const auto n = static_cast<std::size_t>(detail::get_count(doc, "N"));
  VertexTexture t;
  t.colors = detail::unflatten(detail::get_doubles(doc, "colors", 3 * n), static_cast<Eigen::Index>(n), 3);
  const auto coverage = detail::get_ints(doc, "coverage", n);
  t.coverage.assign(coverage.begin(), coverage.end());
  for (int c : coverage) {
    if (c != 0 && c != 1) throw ParseError("texture coverage must be 0 or 1");
  }
  if (doc.contains("sample_count")) {
    t.sample_count = detail::get_ints(doc, "sample_count", n);
  } else {
    t.sample_count.assign(coverage.begin(), coverage.end());
  }
  validate(t);
  return t;
}

}  // namespace densefit
