#include "densefit/synthetic_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace densefit {

namespace {

constexpr int kMaxJoints = 24;

// SMPL kinematic tree and a T-pose skeleton in meters.
constexpr std::array<int, kMaxJoints> kParents = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8,
                                                  9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};

constexpr std::array<std::array<double, 3>, kMaxJoints> kRestJoints = {{
    {0.0, 0.0, 0.0},        // pelvis
    {0.09, -0.08, 0.0},     // left hip
    {-0.09, -0.08, 0.0},    // right hip
    {0.0, 0.11, -0.01},     // spine1
    {0.10, -0.46, 0.0},     // left knee
    {-0.10, -0.46, 0.0},    // right knee
    {0.0, 0.24, 0.0},       // spine2
    {0.10, -0.86, -0.02},   // left ankle
    {-0.10, -0.86, -0.02},  // right ankle
    {0.0, 0.30, 0.01},      // spine3
    {0.11, -0.92, 0.10},    // left foot
    {-0.11, -0.92, 0.10},   // right foot
    {0.0, 0.51, -0.01},     // neck
    {0.07, 0.42, 0.0},      // left collar
    {-0.07, 0.42, 0.0},     // right collar
    {0.0, 0.60, 0.02},      // head
    {0.18, 0.45, -0.01},    // left shoulder
    {-0.18, 0.45, -0.01},   // right shoulder
    {0.43, 0.43, -0.02},    // left elbow
    {-0.43, 0.43, -0.02},   // right elbow
    {0.68, 0.44, -0.01},    // left wrist
    {-0.68, 0.44, -0.01},   // right wrist
    {0.76, 0.43, -0.01},    // left hand
    {-0.76, 0.43, -0.01},   // right hand
}};

// Radius of the capsule ending at each joint (index 0 unused).
constexpr std::array<double, kMaxJoints> kBoneRadius = {
    0.0,  0.08, 0.08, 0.12,  0.07,  0.07,  0.12,  0.05,  0.05,  0.11,  0.045, 0.045,
    0.05, 0.05, 0.05, 0.05,  0.05,  0.05,  0.045, 0.045, 0.038, 0.038, 0.035, 0.035};

struct Segment {
  Vec3 start;
  Vec3 end;
  double radius = 0.0;
  int owner = 0;         // joint whose transform drives the segment
  int start_blend = -1;  // joint blended in near the start
  int end_blend = -1;    // joint blended in near the end
  int end_joint = -1;    // joint located at the end ring (bones only)
  int start_joint = 0;   // joint located at the start ring
};

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

Vec3 rest_joint(int j) { return {kRestJoints[j][0], kRestJoints[j][1], kRestJoints[j][2]}; }

std::vector<Segment> build_segments(int joint_count) {
  std::vector<bool> has_child(joint_count, false);
  for (int j = 1; j < joint_count; ++j) has_child[kParents[j]] = true;

  std::vector<Segment> segments;
  for (int j = 1; j < joint_count; ++j) {
    Segment s;
    const int p = kParents[j];
    s.start = rest_joint(p);
    s.end = rest_joint(j);
    s.radius = kBoneRadius[j];
    s.owner = p;
    s.start_blend = kParents[p];
    s.end_blend = j;
    s.start_joint = p;
    s.end_joint = j;
    segments.push_back(s);
  }
  for (int j = 1; j < joint_count; ++j) {
    if (has_child[j]) continue;
    double length = 0.1;
    double radius = kBoneRadius[j];
    if (j == 15) {
      length = 0.22;
      radius = 0.1;
    } else if (j == 10 || j == 11) {
      radius = 0.04;
    }
    const Vec3 dir = (rest_joint(j) - rest_joint(kParents[j])).normalized();
    Segment s;
    s.start = rest_joint(j);
    s.end = s.start + length * dir;
    s.radius = radius;
    s.owner = j;
    s.start_blend = kParents[j];
    s.start_joint = j;
    segments.push_back(s);
  }
  return segments;
}

struct SegmentMesh {
  int first_vertex = 0;
  std::vector<int> start_ring;
  std::vector<int> end_ring;
};

int nearest_vertex(const Points3& verts, const Vec3& target) {
  Eigen::Index best = 0;
  (verts.rowwise() - target.transpose()).rowwise().squaredNorm().minCoeff(&best);
  return static_cast<int>(best);
}

}  // namespace

BodyModelSpec make_synthetic_model(const SyntheticModelConfig& config, std::uint64_t seed) {
  if (config.joint_count < 4 || config.joint_count > kMaxJoints) {
    throw InvariantError("synthetic model joint_count must be in [4, 24]");
  }
  if (config.rings < 2 || config.around < 3) {
    throw InvariantError("synthetic model needs rings >= 2 and around >= 3");
  }
  if (config.shape_count < 0 || config.keypoint_count < 1) {
    throw InvariantError("synthetic model needs shape_count >= 0 and keypoint_count >= 1");
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const int jn = config.joint_count;
  const auto segments = build_segments(jn);
  const int per_segment = config.vertices_per_segment();
  const int n = per_segment * static_cast<int>(segments.size());

  BodyModelSpec model;
  model.parents.assign(kParents.begin(), kParents.begin() + jn);
  model.template_vertices.resize(n, 3);
  model.skinning_weights = Eigen::MatrixXd::Zero(n, jn);

  // Per-vertex unit direction used by the radial blendshapes.
  Points3 radial_dir(n, 3);
  std::vector<int> vertex_segment(n);
  std::vector<SegmentMesh> meshes(segments.size());
  std::vector<std::array<int, 3>> faces;
  std::vector<int> depth(jn, 0);
  for (int j = 1; j < jn; ++j) depth[j] = depth[kParents[j]] + 1;

  for (std::size_t si = 0; si < segments.size(); ++si) {
    const Segment& seg = segments[si];
    const Vec3 axis_full = seg.end - seg.start;
    const double length = axis_full.norm();
    const Vec3 axis = axis_full / length;
    const Vec3 ref = std::abs(axis.z()) > 0.9 ? Vec3::UnitX() : Vec3::UnitZ();
    const Vec3 u = axis.cross(ref).normalized();
    const Vec3 v = axis.cross(u);

    SegmentMesh& sm = meshes[si];
    sm.first_vertex = static_cast<int>(si) * per_segment;
    int idx = sm.first_vertex;

    auto set_weights = [&](int vi, double t) {
      double w_start = seg.start_blend >= 0 ? 0.5 * smoothstep((0.25 - t) / 0.25) : 0.0;
      double w_end = seg.end_blend >= 0 ? 0.5 * smoothstep((t - 0.75) / 0.25) : 0.0;
      model.skinning_weights(vi, seg.owner) += 1.0 - w_start - w_end;
      if (w_start > 0.0) model.skinning_weights(vi, seg.start_blend) += w_start;
      if (w_end > 0.0) model.skinning_weights(vi, seg.end_blend) += w_end;
    };

    for (int k = 0; k < config.rings; ++k) {
      const double t = static_cast<double>(k) / (config.rings - 1);
      const Vec3 center = seg.start + t * axis_full;
      for (int m = 0; m < config.around; ++m) {
        // Alternate a half-step twist along each chain so rings shared at a joint never coincide.
        const double twist = 0.5 * (depth[seg.start_joint] % 2);
        const double phi = 2.0 * std::numbers::pi * (m + twist) / config.around;
        const Vec3 dir = std::cos(phi) * u + std::sin(phi) * v;
        model.template_vertices.row(idx) = (center + seg.radius * dir).transpose();
        radial_dir.row(idx) = dir.transpose();
        vertex_segment[idx] = static_cast<int>(si);
        set_weights(idx, t);
        if (k == 0) sm.start_ring.push_back(idx);
        if (k == config.rings - 1) sm.end_ring.push_back(idx);
        ++idx;
      }
    }
    const int start_pole = idx++;
    const int end_pole = idx++;
    model.template_vertices.row(start_pole) = (seg.start - 0.5 * seg.radius * axis).transpose();
    model.template_vertices.row(end_pole) = (seg.end + 0.5 * seg.radius * axis).transpose();
    radial_dir.row(start_pole) = -axis.transpose();
    radial_dir.row(end_pole) = axis.transpose();
    vertex_segment[start_pole] = vertex_segment[end_pole] = static_cast<int>(si);
    set_weights(start_pole, 0.0);
    set_weights(end_pole, 1.0);

    const int base = sm.first_vertex;
    for (int k = 0; k + 1 < config.rings; ++k) {
      for (int m = 0; m < config.around; ++m) {
        const int m1 = (m + 1) % config.around;
        const int a = base + k * config.around + m;
        const int b = base + k * config.around + m1;
        const int c = base + (k + 1) * config.around + m;
        const int d = base + (k + 1) * config.around + m1;
        faces.push_back({a, b, d});
        faces.push_back({a, d, c});
      }
    }
    const int last = base + (config.rings - 1) * config.around;
    for (int m = 0; m < config.around; ++m) {
      const int m1 = (m + 1) % config.around;
      faces.push_back({start_pole, base + m1, base + m});
      faces.push_back({end_pole, last + m, last + m1});
    }
  }

  model.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
  for (std::size_t t = 0; t < faces.size(); ++t) {
    for (int c = 0; c < 3; ++c) model.faces(static_cast<Eigen::Index>(t), c) = faces[t][c];
  }

  // Joints regress to the centroid of every ring that sits on them.
  model.joint_regressor = Eigen::MatrixXd::Zero(jn, n);
  {
    std::vector<std::vector<int>> rings(jn);
    for (std::size_t si = 0; si < segments.size(); ++si) {
      const auto& sm = meshes[si];
      rings[segments[si].start_joint].insert(rings[segments[si].start_joint].end(),
                                             sm.start_ring.begin(), sm.start_ring.end());
      if (segments[si].end_joint >= 0) {
        rings[segments[si].end_joint].insert(rings[segments[si].end_joint].end(), sm.end_ring.begin(),
                                             sm.end_ring.end());
      }
    }
    for (int j = 0; j < jn; ++j) {
      for (int vi : rings[j]) model.joint_regressor(j, vi) += 1.0 / static_cast<double>(rings[j].size());
    }
  }

  // Shape blendshapes: a global anisotropic scale about the pelvis plus a
  // per-segment radial offset.
  const int nb = config.shape_count;
  model.shape_blendshapes = Eigen::MatrixXd::Zero(3 * n, nb);
  for (int b = 0; b < nb; ++b) {
    Vec3 scale;
    for (int c = 0; c < 3; ++c) scale[c] = 0.03 * normal(rng);
    std::vector<double> radial(segments.size());
    for (auto& r : radial) r = 0.01 * normal(rng);
    for (int i = 0; i < n; ++i) {
      const Vec3 offset = scale.cwiseProduct(model.template_vertices.row(i).transpose()) +
                          radial[vertex_segment[i]] * radial_dir.row(i).transpose();
      model.shape_blendshapes.block<3, 1>(3 * i, b) = offset;
    }
  }

  // Keypoints: the OpenPose BODY_25 layout when the full skeleton is present,
  // joint rows followed by random surface vertices otherwise.
  const int nk = config.keypoint_count;
  model.keypoint_regressor = Eigen::MatrixXd::Zero(nk, n);
  if (jn == kMaxJoints && nk == 25) {
    const Vec3 head_dir = (rest_joint(15) - rest_joint(12)).normalized();
    const Vec3 head_center = rest_joint(15) + 0.11 * head_dir;
    const double head_r = 0.1;
    auto foot_tip = [&](int ankle, int foot) {
      return rest_joint(foot) + 0.1 * (rest_joint(foot) - rest_joint(ankle)).normalized();
    };
    const std::array<int, 25> joint_of = {-1, 12, 17, 19, 21, 16, 18, 20, 0,  2,  5,  8,  1,
                                          4,  7,  -1, -1, -1, -1, -1, -1, -1, -1, -1, -1};
    std::array<Vec3, 25> surface;
    surface[0] = head_center + Vec3(0.0, 0.0, head_r);
    surface[15] = head_center + Vec3(-0.035, 0.04, 0.9 * head_r);
    surface[16] = head_center + Vec3(0.035, 0.04, 0.9 * head_r);
    surface[17] = head_center + Vec3(-head_r, 0.02, 0.0);
    surface[18] = head_center + Vec3(head_r, 0.02, 0.0);
    surface[19] = foot_tip(7, 10) + Vec3(-0.02, 0.0, 0.0);
    surface[20] = foot_tip(7, 10) + Vec3(0.03, 0.0, -0.02);
    surface[21] = rest_joint(7) + Vec3(0.0, -0.05, -0.05);
    surface[22] = foot_tip(8, 11) + Vec3(0.02, 0.0, 0.0);
    surface[23] = foot_tip(8, 11) + Vec3(-0.03, 0.0, -0.02);
    surface[24] = rest_joint(8) + Vec3(0.0, -0.05, -0.05);
    for (int k = 0; k < 25; ++k) {
      if (joint_of[k] >= 0) {
        model.keypoint_regressor.row(k) = model.joint_regressor.row(joint_of[k]);
      } else {
        model.keypoint_regressor(k, nearest_vertex(model.template_vertices, surface[k])) = 1.0;
      }
    }
  } else {
    std::uniform_int_distribution<int> pick(0, n - 1);
    for (int k = 0; k < nk; ++k) {
      if (k < jn) {
        model.keypoint_regressor.row(k) = model.joint_regressor.row(k);
      } else {
        model.keypoint_regressor(k, pick(rng)) = 1.0;
      }
    }
  }

  if (config.pose_blendshapes) {
    model.pose_blendshapes.resize(3 * n, 9 * (jn - 1));
    for (Eigen::Index i = 0; i < model.pose_blendshapes.size(); ++i) {
      model.pose_blendshapes.data()[i] = 0.002 * normal(rng);
    }
  }

  validate(model);
  return model;
}

HingeSet synthetic_hinges(int joint_count) {
  // Left/right elbow about y, left/right knee about x.
  const std::array<std::pair<int, double>, 4> all = {
      {{18 * 3 + 1, 1.0}, {19 * 3 + 1, -1.0}, {4 * 3 + 0, -1.0}, {5 * 3 + 0, -1.0}}};
  HingeSet out;
  for (const auto& [index, sign] : all) {
    if (index / 3 < joint_count) {
      out.indices.push_back(index);
      out.signs.push_back(sign);
    }
  }
  return out;
}

}  // namespace densefit
