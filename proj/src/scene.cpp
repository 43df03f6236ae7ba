#include "densefit/scene.hpp"

#include "densefit/rasterizer.hpp"
#include "json_arrays.hpp"

#include <algorithm>
#include <cmath>

namespace densefit {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
  return mix64(mix64(mix64(master) ^ stream) ^ index);
}

Eigen::VectorXd PoseDistribution::sample(std::mt19937_64& rng) const {
  std::uniform_int_distribution<Eigen::Index> pick(0, modes.rows() - 1);
  std::normal_distribution<double> normal(0.0, within_std);
  Eigen::VectorXd x = modes.row(pick(rng)).transpose();
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += normal(rng);
  return x;
}

Eigen::MatrixXd PoseDistribution::sample_many(int count, std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd out(count, dim());
  for (int i = 0; i < count; ++i) out.row(i) = sample(rng).transpose();
  return out;
}

PoseDistribution make_pose_distribution(const BodyModelSpec& model, int modes, double mode_std, double within_std,
                                        std::uint64_t seed) {
  if (modes < 1 || mode_std < 0.0 || within_std < 0.0) {
    throw InvariantError("pose distribution needs >= 1 mode and non-negative spreads");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, mode_std);
  PoseDistribution dist;
  dist.within_std = within_std;
  dist.modes.resize(modes, model.pose_dim() - 3);
  for (Eigen::Index k = 0; k < dist.modes.rows(); ++k)
    for (Eigen::Index i = 0; i < dist.modes.cols(); ++i) dist.modes(k, i) = normal(rng);
  return dist;
}

Mat3 synthetic_camera_rotation() { return Vec3(1.0, -1.0, -1.0).asDiagonal(); }

VertexTexture make_subject_texture(const BodyModelSpec& model, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Vec3 tint(unit(rng), unit(rng), unit(rng));
  const Vec3 freq(1.0 + 4.0 * unit(rng), 1.0 + 4.0 * unit(rng), 1.0 + 4.0 * unit(rng));
  const Points3 base = unique_vertex_colors(model);
  VertexTexture t = solid_texture(model.vertex_count(), Vec3::Zero());
  for (Eigen::Index i = 0; i < base.rows(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const double stripes = 0.5 + 0.5 * std::sin(freq[c] * 6.283185307179586 * base(i, (c + 1) % 3));
      t.colors(i, c) = std::clamp(0.45 * tint[c] + 0.35 * base(i, c) + 0.2 * stripes, 0.0, 1.0);
    }
  }
  return t;
}

Scene make_scene(const BodyModelSpec& model, const PoseDistribution& poses, const SceneConfig& config,
                 std::uint64_t seed, int id) {
  if (poses.dim() != model.pose_dim() - 3) throw DimensionError("pose distribution does not match the model");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> depth_jitter(-0.2, 0.2);
  const int n = model.vertex_count();

  for (int attempt = 0; attempt < config.max_attempts; ++attempt) {
    Scene scene;
    scene.id = id;
    scene.seed = seed;
    scene.gt = BodyParams::zeros(model);
    for (int c = 0; c < 3; ++c) scene.gt.pose[c] = config.root_std * normal(rng);
    scene.gt.pose.tail(model.pose_dim() - 3) = poses.sample(rng);
    for (int b = 0; b < model.shape_count(); ++b) scene.gt.shape[b] = config.shape_std * normal(rng);
    const Vec3 t(0.05 * normal(rng), 0.05 * normal(rng), config.camera_distance + depth_jitter(rng));
    scene.camera = Camera::with_default_intrinsics(config.width, config.height, synthetic_camera_rotation(), t);

    const Points3 mesh = forward(model, scene.gt);
    if (!project(scene.camera, mesh).all_valid()) continue;
    const RenderBuffers buffers = rasterize(mesh, model.faces, scene.camera, config.width, config.height);
    const VertexVisibility vis = vertex_visibility(buffers, model.faces, n);
    int visible = 0;
    for (auto v : vis.visible) visible += v;
    if (visible < config.min_visible_fraction * n) continue;

    scene.texture = make_subject_texture(model, mix64(seed ^ 0x7465787475726531ULL));
    return scene;
  }
  throw Error("scene " + std::to_string(id) + ": no valid draw within the attempt limit");
}

Perturbed perturb_params(const BodyParams& params, const Camera& camera, double sigma_pose, double sigma_shape,
                         double sigma_translation, std::uint64_t seed) {
  if (sigma_pose < 0.0 || sigma_shape < 0.0 || sigma_translation < 0.0) {
    throw InvariantError("perturbation sigmas must be non-negative");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Perturbed out{params, camera};
  for (Eigen::Index i = 0; i < out.params.pose.size(); ++i) out.params.pose[i] += sigma_pose * normal(rng);
  for (Eigen::Index i = 0; i < out.params.shape.size(); ++i) out.params.shape[i] += sigma_shape * normal(rng);
  for (int i = 0; i < 3; ++i) out.camera.translation[i] += sigma_translation * normal(rng);
  return out;
}

using detail::json;

namespace {

json camera_json(const Camera& c) {
  json j;
  j["fx"] = c.fx;
  j["fy"] = c.fy;
  j["cx"] = c.cx;
  j["cy"] = c.cy;
  j["width"] = c.width;
  j["height"] = c.height;
  j["rotation"] = detail::flatten(c.rotation);
  j["translation"] = detail::flatten(c.translation);
  return j;
}

Camera camera_from_json(const json& j) {
  Camera c;
  try {
    c.fx = j.at("fx").get<double>();
    c.fy = j.at("fy").get<double>();
    c.cx = j.at("cx").get<double>();
    c.cy = j.at("cy").get<double>();
    c.width = j.at("width").get<int>();
    c.height = j.at("height").get<int>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("camera: ") + e.what());
  }
  c.rotation = detail::unflatten(detail::get_doubles(j, "rotation", 9), 3, 3);
  c.translation = detail::unflatten(detail::get_doubles(j, "translation", 3), 3, 1);
  validate(c);
  return c;
}

}  // namespace

void save_scenes(const std::vector<Scene>& scenes, const std::filesystem::path& path) {
  json doc;
  doc["scenes"] = json::array();
  for (const auto& s : scenes) {
    json j;
    j["id"] = s.id;
    j["seed"] = s.seed;
    j["pose"] = detail::flatten(s.gt.pose);
    j["shape"] = detail::flatten(s.gt.shape);
    j["camera"] = camera_json(s.camera);
    j["colors"] = detail::flatten(s.texture.colors);
    doc["scenes"].push_back(j);
  }
  detail::write_json_file(path, doc);
}

std::vector<Scene> load_scenes(const std::filesystem::path& path) {
  const json doc = detail::read_json_file(path);
  if (!doc.contains("scenes") || !doc["scenes"].is_array()) throw ParseError("scene file needs a 'scenes' array");
  std::vector<Scene> out;
  for (const auto& j : doc["scenes"]) {
    Scene s;
    try {
      s.id = j.at("id").get<int>();
      s.seed = j.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
      throw ParseError(std::string("scene: ") + e.what());
    }
    const auto pose = j.at("pose").get<std::vector<double>>();
    const auto shape = j.at("shape").get<std::vector<double>>();
    s.gt.pose = Eigen::Map<const Eigen::VectorXd>(pose.data(), static_cast<Eigen::Index>(pose.size()));
    s.gt.shape = Eigen::Map<const Eigen::VectorXd>(shape.data(), static_cast<Eigen::Index>(shape.size()));
    s.camera = camera_from_json(j.at("camera"));
    const auto colors = j.at("colors").get<std::vector<double>>();
    if (colors.size() % 3 != 0) throw ParseError("scene colors must be N×3");
    s.texture = solid_texture(static_cast<int>(colors.size() / 3), Vec3::Zero());
    s.texture.colors = detail::unflatten(colors, static_cast<Eigen::Index>(colors.size() / 3), 3);
    validate(s.texture);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace densefit
