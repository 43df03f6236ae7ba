#pragma once

#include "densefit/body_model.hpp"

#include <cstdint>
#include <vector>

namespace densefit {

/// Desk-scale humanoid built from capsule limbs over an SMPL-like skeleton
/// (rest pose is a T-pose, y up, facing +z). Joints are a prefix of the
/// 24-joint SMPL ordering, so joint_count=24 gives 72 pose parameters.
struct SyntheticModelConfig {
  int joint_count = 24;     // 4..24
  int rings = 5;            // rings along each capsule
  int around = 8;           // vertices per ring
  int shape_count = 10;
  int keypoint_count = 25;
  bool pose_blendshapes = false;

  int vertices_per_segment() const { return rings * around + 2; }
};

BodyModelSpec make_synthetic_model(const SyntheticModelConfig& config, std::uint64_t seed);

/// Pose coordinates (index into the 3J pose vector) of elbows and knees with
/// the sign that makes exp(sign * θ) grow toward hyperextension.
struct HingeSet {
  std::vector<int> indices;
  std::vector<double> signs;
};

HingeSet synthetic_hinges(int joint_count);

}  // namespace densefit
