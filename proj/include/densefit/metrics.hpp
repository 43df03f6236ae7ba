#pragma once

#include "densefit/body_model.hpp"
#include "densefit/types.hpp"

#include <optional>

namespace densefit {

/// Point sets are M×3 in meters; every metric returns millimeters.
struct MetricOptions {
  bool root_align = false;  // subtract point 0 from both sets first
};

/// Mean Euclidean distance.
double mpjpe(const Points3& pred, const Points3& gt, const MetricOptions& options = {});

/// Similarity transform gt ≈ s·R·pred + t with det R = +1.
struct Similarity {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Points3 apply(const Points3& points) const;
};

/// Least-squares similarity Procrustes. Throws InvariantError for fewer than
/// three points or collinear inputs.
Similarity pa_align(const Points3& pred, const Points3& gt);
double pa_mpjpe(const Points3& pred, const Points3& gt);

/// Both sets centered, pred scaled by ⟨pred,gt⟩/⟨pred,pred⟩.
double n_mpjpe(const Points3& pred, const Points3& gt);

// Vertex variants are the same computations over full meshes.
inline double pve(const Points3& pred, const Points3& gt, const MetricOptions& o = {}) { return mpjpe(pred, gt, o); }
inline double pa_pve(const Points3& pred, const Points3& gt) { return pa_mpjpe(pred, gt); }
inline double n_pve(const Points3& pred, const Points3& gt) { return n_mpjpe(pred, gt); }

struct MetricsReport {
  double mpjpe = 0.0;
  double pa_mpjpe = 0.0;
  double n_mpjpe = 0.0;
  double pve = 0.0;
  double pa_pve = 0.0;
  double n_pve = 0.0;
  std::optional<double> epe;  // pixels, when a field was evaluated
};

/// Joints are regressed with the model's keypoint regressor.
MetricsReport report(const Points3& pred_mesh, const Points3& gt_mesh, const BodyModelSpec& model,
                     const MetricOptions& options = {});

}  // namespace densefit
