#pragma once

#include "densefit/body_model.hpp"
#include "densefit/displacement.hpp"
#include "densefit/fitter.hpp"
#include "densefit/metrics.hpp"
#include "densefit/priors.hpp"
#include "densefit/providers.hpp"
#include "densefit/rasterizer.hpp"
#include "densefit/scene.hpp"
#include "densefit/synthetic_model.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace densefit {

struct ExperimentConfig {
  int scene_count = 100;
  std::uint64_t master_seed = 1;

  double sigma_pose = 0.15;         // radians per pose coordinate
  double sigma_shape = 0.5;
  double sigma_translation = 0.05;  // meters

  SceneConfig scene;

  // Model: loaded from `model_path` when set, otherwise generated.
  std::filesystem::path model_path;
  SyntheticModelConfig synthetic;

  // Pose distribution used for ground truth and for fitting the GMM prior.
  int pose_modes = 4;
  double pose_mode_std = 0.25;
  double pose_within_std = 0.12;
  std::filesystem::path prior_path;  // loaded when set, otherwise fitted
  int prior_components = 4;
  int prior_samples = 10000;

  std::vector<ProviderSpec> providers;
  FitConfig fit;
  MetricOptions metrics;

  std::filesystem::path output_dir = "out";
  int overlays = 0;  // scenes (from the first) that get overlay images
  int overlay_stride = 8;
  bool record_wall_time = false;
  // Dense providers: after each fit, re-render at the estimate, query the
  // provider again, and refit. 1 means a single fit.
  int refit_rounds = 1;

  /// Default suite: dense oracle vs 25 ground-truth keypoints.
  static std::vector<ProviderSpec> default_providers();
};

void validate(const ExperimentConfig& config);

/// Unknown keys are rejected so typos do not silently fall back to defaults.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Model, pose distribution, and prior shared by every scene.
struct ExperimentContext {
  BodyModelSpec model;
  PoseDistribution poses;
  GmmPrior prior;
};

ExperimentContext build_context(const ExperimentConfig& config);

struct ResultRow {
  int scene_id = 0;
  std::string provider;
  std::optional<MetricsReport> pre;   // absent when the scene failed before fitting
  std::optional<MetricsReport> post;  // absent when the fit failed
  std::optional<double> epe;  // dense providers: EPE against the oracle field
  int iterations = 0;
  long long wall_ms = 0;
  std::string error_code;     // empty on success
};

/// Everything for one scene: generation, perturbation, each provider's fit.
std::vector<ResultRow> run_scene(const ExperimentContext& context, const ExperimentConfig& config, int index);

struct ProviderSummary {
  std::string provider;
  int scenes = 0;
  int errors = 0;
  MetricsReport median_pre;
  MetricsReport median_post;
  MetricsReport mean_post;
  std::optional<double> median_epe;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;  // scene-major, providers in config order
  std::vector<ProviderSummary> summary;
  bool any_error() const;
};

std::vector<ProviderSummary> summarize(const std::vector<ResultRow>& rows);

/// Runs every scene with `jobs` worker threads. Output files are written only
/// when `write_outputs` is set.
ExperimentResult run_experiment(const ExperimentConfig& config, int jobs = 1, bool write_outputs = true);
ExperimentResult run_experiment(const ExperimentContext& context, const ExperimentConfig& config, int jobs,
                                bool write_outputs);

void write_results_csv(const std::vector<ResultRow>& rows, std::ostream& out);
std::vector<ResultRow> read_results_csv(std::istream& in);
void write_summary_json(const std::vector<ProviderSummary>& summary, std::ostream& out);
void print_summary(const std::vector<ProviderSummary>& summary, std::ostream& out);

/// Noisy-oracle providers at each σ share the same per-scene noise draw.
std::vector<ProviderSpec> noise_ablation_providers(const std::vector<double>& sigmas);

struct TextureAblationRow {
  int scene_id = 0;
  std::string perturbation;
  double texture_error = 0.0;      // mean absolute channel error vs the subject texture, 0-255
  double photometric_error = 0.0;  // mean absolute rendered-pixel error, 0-255
  double coverage = 0.0;           // fraction of vertices with samples
};

/// Reconstructs each subject texture from `frames` renderings by
/// back-projection and median, then applies the ablation perturbations.
std::vector<TextureAblationRow> run_texture_ablation(const ExperimentContext& context,
                                                     const ExperimentConfig& config, int frames);
void write_texture_csv(const std::vector<TextureAblationRow>& rows, std::ostream& out);

/// RGB rendering with a displacement arrow at every `stride`-th valid pixel
/// (x and y multiples of stride). Zero-length arrows are not drawn.
RgbImage render_overlay(const RenderBuffers& buffers, const DisplacementField& field, int stride,
                        const Vec3& arrow_color = Vec3(1.0, 0.0, 0.0));

}  // namespace densefit
