#pragma once

#include "densefit/body_model.hpp"
#include "densefit/camera.hpp"
#include "densefit/displacement.hpp"
#include "densefit/rasterizer.hpp"
#include "densefit/scene.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace densefit {

enum class ProviderKind { Oracle, NoisyOracle, SparseKeypoints, External };

const char* to_string(ProviderKind kind);
ProviderKind provider_kind_from_string(const std::string& name);

/// Where the data term of a fit comes from.
struct ProviderSpec {
  std::string name;                    // label used in result tables
  ProviderKind kind = ProviderKind::Oracle;
  double noise_sigma = 0.0;            // pixels, per axis (noisy_oracle)
  double correlation_radius = 0.0;     // pixels; > 0 blurs the noise, then rescales it to noise_sigma
  double jitter_sigma = 0.0;           // pixels, per axis (sparse_keypoints)
  double dropout = 0.0;                // fraction of keypoints given confidence 0
  std::filesystem::path path;          // external field; "{scene}" is replaced by the scene id
  std::uint64_t seed = 0;              // mixed into the per-scene seed

  bool is_dense() const { return kind != ProviderKind::SparseKeypoints; }
};

void validate(const ProviderSpec& spec);

/// Dense displacement field for an initial rendering `buffers` of `init`.
DisplacementField provide_dense(const ProviderSpec& spec, const BodyModelSpec& model, const Scene& scene,
                                const BodyParams& init, const Camera& init_camera, const RenderBuffers& buffers,
                                std::uint64_t seed, const ForwardOptions& options = {});

struct SparseObservation {
  Points2 joints;
  Eigen::VectorXd confidence;
};

/// Projected ground-truth keypoints (occluded ones included), with optional
/// jitter and round(dropout·k) keypoints set to confidence 0.
SparseObservation provide_sparse(const ProviderSpec& spec, const BodyModelSpec& model, const Scene& scene,
                                 std::uint64_t seed, const ForwardOptions& options = {});

/// Adds N(0, σ²) per pixel and axis at valid pixels. With radius > 0 the noise
/// is Gaussian-blurred (std = radius) and rescaled to RMS σ over valid pixels.
void add_field_noise(DisplacementField& field, double sigma, double correlation_radius, std::uint64_t seed);

}  // namespace densefit
