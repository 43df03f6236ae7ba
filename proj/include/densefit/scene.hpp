#pragma once

#include "densefit/body_model.hpp"
#include "densefit/camera.hpp"
#include "densefit/texture.hpp"
#include "densefit/types.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

namespace densefit {

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Counter-based seed split: the seed for (stream, index) does not depend on
/// how many other indices are drawn.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index);

namespace seed_stream {
constexpr std::uint64_t kScene = 1;
constexpr std::uint64_t kPerturb = 2;
constexpr std::uint64_t kProvider = 3;
constexpr std::uint64_t kTexture = 4;
constexpr std::uint64_t kPoseModes = 5;
constexpr std::uint64_t kPrior = 6;
constexpr std::uint64_t kModel = 7;
}  // namespace seed_stream

/// Mixture of Gaussian pose clusters over the body-pose coordinates (root excluded).
struct PoseDistribution {
  Eigen::MatrixXd modes;  // K×(3J-3)
  double within_std = 0.12;

  int dim() const { return static_cast<int>(modes.cols()); }
  Eigen::VectorXd sample(std::mt19937_64& rng) const;
  Eigen::MatrixXd sample_many(int count, std::uint64_t seed) const;
};

PoseDistribution make_pose_distribution(const BodyModelSpec& model, int modes, double mode_std, double within_std,
                                        std::uint64_t seed);

struct SceneConfig {
  int width = 256;
  int height = 256;
  double camera_distance = 3.2;  // meters
  double root_std = 0.1;          // radians per root coordinate
  double shape_std = 1.0;
  double min_visible_fraction = 0.3;
  int max_attempts = 100;
};

/// Ground truth for one synthetic image. The model is held by the caller.
struct Scene {
  int id = 0;
  BodyParams gt;
  Camera camera;
  VertexTexture texture;
  std::uint64_t seed = 0;

  int width() const { return camera.width; }
  int height() const { return camera.height; }
};

/// World to camera rotation used by synthetic scenes: the camera sits on +z and
/// looks back at a y-up subject.
Mat3 synthetic_camera_rotation();

/// Smooth per-subject colors.
VertexTexture make_subject_texture(const BodyModelSpec& model, std::uint64_t seed);

/// Draws until the mesh is in front of the camera with at least
/// `min_visible_fraction` of its vertices visible; throws Error otherwise.
Scene make_scene(const BodyModelSpec& model, const PoseDistribution& poses, const SceneConfig& config,
                 std::uint64_t seed, int id);

struct Perturbed {
  BodyParams params;
  Camera camera;
};

/// I.i.d. Gaussian noise on every pose, shape, and camera-translation coordinate.
Perturbed perturb_params(const BodyParams& params, const Camera& camera, double sigma_pose, double sigma_shape,
                         double sigma_translation, std::uint64_t seed);

/// JSON helpers shared by the CLI.
void save_scenes(const std::vector<Scene>& scenes, const std::filesystem::path& path);
std::vector<Scene> load_scenes(const std::filesystem::path& path);

}  // namespace densefit
