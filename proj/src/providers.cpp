#include "densefit/providers.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>

namespace densefit {

const char* to_string(ProviderKind kind) {
  switch (kind) {
    case ProviderKind::Oracle: return "oracle";
    case ProviderKind::NoisyOracle: return "noisy_oracle";
    case ProviderKind::SparseKeypoints: return "sparse_keypoints";
    case ProviderKind::External: return "external";
  }
  return "?";
}

ProviderKind provider_kind_from_string(const std::string& name) {
  if (name == "oracle") return ProviderKind::Oracle;
  if (name == "noisy_oracle") return ProviderKind::NoisyOracle;
  if (name == "sparse_keypoints" || name == "sparse") return ProviderKind::SparseKeypoints;
  if (name == "external") return ProviderKind::External;
  throw ParseError("unknown provider kind '" + name + "'");
}

void validate(const ProviderSpec& spec) {
  if (spec.noise_sigma < 0.0 || spec.jitter_sigma < 0.0 || spec.correlation_radius < 0.0) {
    throw InvariantError("provider '" + spec.name + "': sigmas must be non-negative");
  }
  if (spec.dropout < 0.0 || spec.dropout >= 1.0) {
    throw InvariantError("provider '" + spec.name + "': dropout must lie in [0, 1)");
  }
  if (spec.kind == ProviderKind::External && spec.path.empty()) {
    throw InvariantError("provider '" + spec.name + "': external provider needs a path");
  }
}

namespace {

// Separable Gaussian blur of a scalar grid; out-of-image taps are dropped.
Grid<double> blur(const Grid<double>& in, double radius) {
  const int half = std::max(1, static_cast<int>(std::ceil(3.0 * radius)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * half + 1));
  for (int k = -half; k <= half; ++k) kernel[static_cast<std::size_t>(k + half)] = std::exp(-0.5 * k * k / (radius * radius));
  const int w = in.width();
  const int h = in.height();
  Grid<double> tmp(w, h, 0.0);
  Grid<double> out(w, h, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -half; k <= half; ++k) {
        const int xx = x + k;
        if (xx >= 0 && xx < w) acc += kernel[static_cast<std::size_t>(k + half)] * in(xx, y);
      }
      tmp(x, y) = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -half; k <= half; ++k) {
        const int yy = y + k;
        if (yy >= 0 && yy < h) acc += kernel[static_cast<std::size_t>(k + half)] * tmp(x, yy);
      }
      out(x, y) = acc;
    }
  return out;
}

std::string substitute_scene(const std::string& pattern, int id) {
  std::string out = pattern;
  const std::string key = "{scene}";
  for (auto pos = out.find(key); pos != std::string::npos; pos = out.find(key)) {
    out.replace(pos, key.size(), std::to_string(id));
  }
  return out;
}

}  // namespace

void add_field_noise(DisplacementField& field, double sigma, double correlation_radius, std::uint64_t seed) {
  if (sigma < 0.0 || correlation_radius < 0.0) throw InvariantError("noise parameters must be non-negative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int w = field.width();
  const int h = field.height();
  // Draw the full image for both axes so the noise at a pixel does not depend on the mask.
  std::array<Grid<double>, 2> noise{Grid<double>(w, h, 0.0), Grid<double>(w, h, 0.0)};
  for (std::size_t p = 0; p < field.mask.size(); ++p)
    for (int c = 0; c < 2; ++c) noise[c][p] = normal(rng);

  if (correlation_radius > 0.0) {
    double sum_sq = 0.0;
    std::size_t count = 0;
    for (int c = 0; c < 2; ++c) {
      noise[c] = blur(noise[c], correlation_radius);
      for (std::size_t p = 0; p < field.mask.size(); ++p) {
        if (!field.mask[p]) continue;
        sum_sq += noise[c][p] * noise[c][p];
        ++count;
      }
    }
    const double rms = count ? std::sqrt(sum_sq / static_cast<double>(count)) : 1.0;
    for (int c = 0; c < 2; ++c)
      for (auto& value : noise[c].data()) value /= rms > 0.0 ? rms : 1.0;
  }
  for (std::size_t p = 0; p < field.mask.size(); ++p) {
    if (!field.mask[p]) continue;
    field.f[p] += sigma * Vec2(noise[0][p], noise[1][p]);
  }
}

DisplacementField provide_dense(const ProviderSpec& spec, const BodyModelSpec& model, const Scene& scene,
                                const BodyParams& init, const Camera& init_camera, const RenderBuffers& buffers,
                                std::uint64_t seed, const ForwardOptions& options) {
  validate(spec);
  switch (spec.kind) {
    case ProviderKind::Oracle:
    case ProviderKind::NoisyOracle: {
      const VertexVisibility vis = vertex_visibility(buffers, model.faces, model.vertex_count());
      const VertexDisplacements v =
          gt_vertex_displacements(model, scene.gt, scene.camera, init, init_camera, vis, options);
      DisplacementField field = vertex_to_pixel(v, buffers, model.faces);
      if (spec.kind == ProviderKind::NoisyOracle && spec.noise_sigma > 0.0) {
        add_field_noise(field, spec.noise_sigma, spec.correlation_radius, mix64(seed ^ spec.seed));
      }
      return field;
    }
    case ProviderKind::External: {
      DisplacementField field = read_field(substitute_scene(spec.path.string(), scene.id));
      if (!field.mask.same_shape(buffers.mask) || field.mask.data() != buffers.mask.data()) {
        throw DimensionError("external field mask does not match the initial rendering");
      }
      return field;
    }
    case ProviderKind::SparseKeypoints:
      break;
  }
  throw InvariantError("provider '" + spec.name + "' is not dense");
}

SparseObservation provide_sparse(const ProviderSpec& spec, const BodyModelSpec& model, const Scene& scene,
                                 std::uint64_t seed, const ForwardOptions& options) {
  validate(spec);
  if (spec.kind != ProviderKind::SparseKeypoints) throw InvariantError("provider '" + spec.name + "' is not sparse");
  const Points3 keypoints = regress_keypoints(model, forward(model, scene.gt, options));
  const Projection proj = project(scene.camera, keypoints);
  if (!proj.all_valid()) throw InvariantError("ground-truth keypoint behind the camera");

  const int k = static_cast<int>(keypoints.rows());
  SparseObservation obs;
  obs.joints = proj.pixels;
  obs.confidence = Eigen::VectorXd::Ones(k);

  std::mt19937_64 rng(mix64(seed ^ spec.seed));
  std::normal_distribution<double> normal(0.0, 1.0);
  if (spec.jitter_sigma > 0.0) {
    for (int j = 0; j < k; ++j)
      for (int c = 0; c < 2; ++c) obs.joints(j, c) += spec.jitter_sigma * normal(rng);
  }
  const int drop = static_cast<int>(std::lround(spec.dropout * k));
  if (drop > 0) {
    std::vector<int> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (int i = 0; i < drop; ++i) obs.confidence[order[static_cast<std::size_t>(i)]] = 0.0;
  }
  return obs;
}

}  // namespace densefit
