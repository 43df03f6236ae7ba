#pragma once

#include "densefit/body_model.hpp"

#include <filesystem>

namespace densefit {

// JSON model schema: header integers N, J, B, k, T_f and row-major arrays
// template (N×3), shape_blendshapes (B×N×3), joint_regressor (J×N),
// keypoint_regressor (k×N), skinning_weights (N×J), parents (J), faces (T_f×3),
// optionally pose_blendshapes (9(J-1)×N×3).
void save_model(const BodyModelSpec& model, const std::filesystem::path& path);
BodyModelSpec load_model(const std::filesystem::path& path);

}  // namespace densefit
