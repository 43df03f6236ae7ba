#pragma once

#include "densefit/types.hpp"

#include <Eigen/Core>

#include <vector>

namespace densefit {

/// Parametric articulated mesh: shape blendshapes on a template, joints
/// regressed from the shaped template, and linear blend skinning over a
/// kinematic tree.
///
/// Joints are stored in topological order: parents[0] == -1 and
/// parents[j] < j for every other joint.
struct BodyModelSpec {
  Points3 template_vertices;             // N×3, meters
  Eigen::MatrixXd shape_blendshapes;     // 3N×B, row 3*v + c
  Eigen::MatrixXd joint_regressor;       // J×N
  Eigen::MatrixXd keypoint_regressor;    // k×N
  Eigen::MatrixXd skinning_weights;      // N×J
  std::vector<int> parents;              // J
  Faces faces;                           // T×3
  Eigen::MatrixXd pose_blendshapes;      // 3N×9(J-1), empty when absent

  int vertex_count() const { return static_cast<int>(template_vertices.rows()); }
  int joint_count() const { return static_cast<int>(parents.size()); }
  int shape_count() const { return static_cast<int>(shape_blendshapes.cols()); }
  int keypoint_count() const { return static_cast<int>(keypoint_regressor.rows()); }
  int face_count() const { return static_cast<int>(faces.rows()); }
  int pose_dim() const { return 3 * joint_count(); }
  bool has_pose_blendshapes() const { return pose_blendshapes.size() > 0; }
};

/// Throws InvariantError (naming the offending field and row) or
/// DimensionError when the model arrays are inconsistent.
void validate(const BodyModelSpec& model);

/// Pose (axis-angle per joint, radians) and shape coefficients.
struct BodyParams {
  Eigen::VectorXd pose;   // 3J
  Eigen::VectorXd shape;  // B

  static BodyParams zeros(const BodyModelSpec& model);
};

/// Wraps every joint rotation magnitude into [0, 2π).
Eigen::VectorXd normalize_pose(const Eigen::VectorXd& pose);

struct ForwardOptions {
  bool pose_blendshapes = false;
};

/// Intermediate quantities of one forward pass, kept for the backward pass.
struct ForwardState {
  Points3 shaped;                 // template + shape offsets
  Points3 rest_joints;            // J×3
  Points3 posed;                  // shaped + pose offsets (pre-skinning)
  std::vector<Mat3> local_rotation;
  std::vector<Mat3> global_rotation;
  std::vector<Vec3> global_translation;
  std::vector<Mat3> skin_rotation;
  std::vector<Vec3> skin_translation;
  Points3 vertices;
};

ForwardState forward_state(const BodyModelSpec& model, const BodyParams& params,
                           const ForwardOptions& options = {});

Points3 forward(const BodyModelSpec& model, const BodyParams& params,
                const ForwardOptions& options = {});

struct BodyParamsGradient {
  Eigen::VectorXd pose;
  Eigen::VectorXd shape;
};

/// Reverse-mode pass: given dL/d(vertices) returns dL/d(pose) and dL/d(shape).
BodyParamsGradient backward(const BodyModelSpec& model, const BodyParams& params,
                            const ForwardState& state, const Points3& vertex_gradient,
                            const ForwardOptions& options = {});

/// d(vertices)/d(pose, shape) as a 3N × (3J + B) matrix; row 3i + c is
/// coordinate c of vertex i, columns are pose then shape.
Eigen::MatrixXd vertex_jacobian(const BodyModelSpec& model, const BodyParams& params,
                                const ForwardState& state, const ForwardOptions& options = {});

/// W · mesh with W the keypoint regressor.
Points3 regress_keypoints(const BodyModelSpec& model, const Points3& mesh);

/// Joint regressor applied to a mesh.
Points3 regress_joints(const BodyModelSpec& model, const Points3& mesh);

}  // namespace densefit
