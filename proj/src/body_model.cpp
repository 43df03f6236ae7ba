#include "densefit/body_model.hpp"

#include "densefit/rotation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace densefit {

namespace {

constexpr double kRowSumTolerance = 1e-6;

void check_dims(const BodyModelSpec& model, const BodyParams& params) {
  if (params.pose.size() != model.pose_dim()) {
    std::ostringstream msg;
    msg << "pose has " << params.pose.size() << " entries, model expects " << model.pose_dim();
    throw DimensionError(msg.str());
  }
  if (params.shape.size() != model.shape_count()) {
    std::ostringstream msg;
    msg << "shape has " << params.shape.size() << " entries, model expects " << model.shape_count();
    throw DimensionError(msg.str());
  }
}

void check_rows_sum_to_one(const Eigen::MatrixXd& m, const char* field, bool require_nonnegative) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double sum = m.row(r).sum();
    if (!std::isfinite(sum) || std::abs(sum - 1.0) > kRowSumTolerance) {
      std::ostringstream msg;
      msg << field << " row " << r << " sums to " << sum << " (expected 1)";
      throw InvariantError(msg.str());
    }
    if (require_nonnegative && m.row(r).minCoeff() < 0.0) {
      std::ostringstream msg;
      msg << field << " row " << r << " has a negative weight";
      throw InvariantError(msg.str());
    }
  }
}

}  // namespace

void validate(const BodyModelSpec& model) {
  const Eigen::Index n = model.template_vertices.rows();
  const Eigen::Index j = static_cast<Eigen::Index>(model.parents.size());
  if (n == 0 || j == 0) {
    throw DimensionError("model needs at least one vertex and one joint");
  }
  if (!model.template_vertices.allFinite()) {
    throw InvariantError("template has non-finite entries");
  }
  if (model.shape_blendshapes.rows() != 3 * n) {
    throw DimensionError("shape_blendshapes must have 3N rows");
  }
  if (model.joint_regressor.rows() != j || model.joint_regressor.cols() != n) {
    throw DimensionError("joint_regressor must be J×N");
  }
  if (model.keypoint_regressor.cols() != n) {
    throw DimensionError("keypoint_regressor must have N columns");
  }
  if (model.skinning_weights.rows() != n || model.skinning_weights.cols() != j) {
    throw DimensionError("skinning_weights must be N×J");
  }
  if (model.has_pose_blendshapes() &&
      (model.pose_blendshapes.rows() != 3 * n || model.pose_blendshapes.cols() != 9 * (j - 1))) {
    throw DimensionError("pose_blendshapes must be 3N×9(J-1)");
  }
  check_rows_sum_to_one(model.skinning_weights, "skinning_weights", true);
  check_rows_sum_to_one(model.joint_regressor, "joint_regressor", false);
  check_rows_sum_to_one(model.keypoint_regressor, "keypoint_regressor", false);

  if (model.parents[0] != -1) {
    throw InvariantError("parents[0] must be the root sentinel -1");
  }
  for (Eigen::Index i = 1; i < j; ++i) {
    const int p = model.parents[i];
    if (p < 0 || p >= i) {
      std::ostringstream msg;
      msg << "parents[" << i << "] = " << p << " breaks the tree order (need 0 <= parent < joint)";
      throw InvariantError(msg.str());
    }
  }
  for (Eigen::Index t = 0; t < model.faces.rows(); ++t) {
    for (int c = 0; c < 3; ++c) {
      const int v = model.faces(t, c);
      if (v < 0 || v >= n) {
        std::ostringstream msg;
        msg << "faces row " << t << " references vertex " << v << " outside [0, " << n << ")";
        throw InvariantError(msg.str());
      }
    }
  }
}

BodyParams BodyParams::zeros(const BodyModelSpec& model) {
  return {Eigen::VectorXd::Zero(model.pose_dim()), Eigen::VectorXd::Zero(model.shape_count())};
}

Eigen::VectorXd normalize_pose(const Eigen::VectorXd& pose) {
  Eigen::VectorXd out = pose;
  for (Eigen::Index j = 0; j + 2 < pose.size(); j += 3) {
    out.segment<3>(j) = normalize_axis_angle(pose.segment<3>(j));
  }
  return out;
}

ForwardState forward_state(const BodyModelSpec& model, const BodyParams& params,
                           const ForwardOptions& options) {
  check_dims(model, params);
  const int n = model.vertex_count();
  const int jn = model.joint_count();
  ForwardState s;

  s.shaped = model.template_vertices;
  if (model.shape_count() > 0) {
    const Eigen::VectorXd offsets = model.shape_blendshapes * params.shape;
    s.shaped += Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>>(
        offsets.data(), n, 3);
  }
  s.rest_joints = model.joint_regressor * s.shaped;

  s.local_rotation.resize(jn);
  for (int j = 0; j < jn; ++j) {
    s.local_rotation[j] = rodrigues(params.pose.segment<3>(3 * j));
  }

  s.posed = s.shaped;
  if (options.pose_blendshapes && model.has_pose_blendshapes()) {
    Eigen::VectorXd feature(9 * (jn - 1));
    for (int j = 1; j < jn; ++j) {
      const Mat3 d = s.local_rotation[j] - Mat3::Identity();
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) feature[9 * (j - 1) + 3 * a + b] = d(a, b);
    }
    const Eigen::VectorXd offsets = model.pose_blendshapes * feature;
    s.posed += Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>>(
        offsets.data(), n, 3);
  }

  s.global_rotation.resize(jn);
  s.global_translation.resize(jn);
  s.skin_rotation.resize(jn);
  s.skin_translation.resize(jn);
  for (int j = 0; j < jn; ++j) {
    const Vec3 joint = s.rest_joints.row(j).transpose();
    const int p = model.parents[j];
    if (p < 0) {
      s.global_rotation[j] = s.local_rotation[j];
      s.global_translation[j] = joint;
    } else {
      const Vec3 offset = joint - s.rest_joints.row(p).transpose();
      s.global_rotation[j] = s.global_rotation[p] * s.local_rotation[j];
      s.global_translation[j] = s.global_rotation[p] * offset + s.global_translation[p];
    }
    s.skin_rotation[j] = s.global_rotation[j];
    s.skin_translation[j] = s.global_translation[j] - s.global_rotation[j] * joint;
  }

  s.vertices.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    const Vec3 p = s.posed.row(i).transpose();
    Vec3 out = Vec3::Zero();
    for (int j = 0; j < jn; ++j) {
      const double w = model.skinning_weights(i, j);
      if (w == 0.0) continue;
      out += w * (s.skin_rotation[j] * p + s.skin_translation[j]);
    }
    s.vertices.row(i) = out.transpose();
  }
  return s;
}

Points3 forward(const BodyModelSpec& model, const BodyParams& params, const ForwardOptions& options) {
  return forward_state(model, params, options).vertices;
}

BodyParamsGradient backward(const BodyModelSpec& model, const BodyParams& params,
                            const ForwardState& s, const Points3& vertex_gradient,
                            const ForwardOptions& options) {
  const int n = model.vertex_count();
  const int jn = model.joint_count();
  if (vertex_gradient.rows() != n) {
    throw DimensionError("vertex gradient must have N rows");
  }

  // Skinning.
  std::vector<Mat3> d_skin_rot(jn, Mat3::Zero());
  std::vector<Vec3> d_skin_trans(jn, Vec3::Zero());
  Points3 d_posed = Points3::Zero(n, 3);
  for (int i = 0; i < n; ++i) {
    const Vec3 g = vertex_gradient.row(i).transpose();
    if (g.isZero(0.0)) continue;
    const Vec3 p = s.posed.row(i).transpose();
    Vec3 dp = Vec3::Zero();
    for (int j = 0; j < jn; ++j) {
      const double w = model.skinning_weights(i, j);
      if (w == 0.0) continue;
      d_skin_rot[j] += w * g * p.transpose();
      d_skin_trans[j] += w * g;
      dp += w * s.skin_rotation[j].transpose() * g;
    }
    d_posed.row(i) = dp.transpose();
  }

  // Skinning transform -> global transform and rest joints.
  std::vector<Mat3> d_global_rot(jn);
  std::vector<Vec3> d_global_trans(jn);
  Points3 d_joints = Points3::Zero(jn, 3);
  for (int j = 0; j < jn; ++j) {
    const Vec3 joint = s.rest_joints.row(j).transpose();
    d_global_rot[j] = d_skin_rot[j] - d_skin_trans[j] * joint.transpose();
    d_global_trans[j] = d_skin_trans[j];
    d_joints.row(j) -= (s.global_rotation[j].transpose() * d_skin_trans[j]).transpose();
  }

  // Kinematic chain, leaves first.
  std::vector<Mat3> d_local(jn);
  for (int j = jn - 1; j >= 0; --j) {
    const int p = model.parents[j];
    if (p < 0) {
      d_local[j] = d_global_rot[j];
      d_joints.row(j) += d_global_trans[j].transpose();
      continue;
    }
    const Vec3 offset = (s.rest_joints.row(j) - s.rest_joints.row(p)).transpose();
    const Mat3& parent_rot = s.global_rotation[p];
    d_global_rot[p] += d_global_rot[j] * s.local_rotation[j].transpose() +
                       d_global_trans[j] * offset.transpose();
    d_local[j] = parent_rot.transpose() * d_global_rot[j];
    const Vec3 d_offset = parent_rot.transpose() * d_global_trans[j];
    d_joints.row(j) += d_offset.transpose();
    d_joints.row(p) -= d_offset.transpose();
    d_global_trans[p] += d_global_trans[j];
  }

  if (options.pose_blendshapes && model.has_pose_blendshapes()) {
    Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> rm = d_posed;
    const Eigen::Map<const Eigen::VectorXd> flat(rm.data(), 3 * n);
    const Eigen::VectorXd d_feature = model.pose_blendshapes.transpose() * flat;
    for (int j = 1; j < jn; ++j) {
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) d_local[j](a, b) += d_feature[9 * (j - 1) + 3 * a + b];
    }
  }

  BodyParamsGradient grad;
  grad.pose.resize(3 * jn);
  for (int j = 0; j < jn; ++j) {
    const auto dr = rodrigues_jacobian(params.pose.segment<3>(3 * j));
    for (int c = 0; c < 3; ++c) {
      grad.pose[3 * j + c] = d_local[j].cwiseProduct(dr[c]).sum();
    }
  }

  // Shape: through the posed vertices and the regressed rest joints.
  Points3 d_shaped = d_posed + model.joint_regressor.transpose() * d_joints;
  if (model.shape_count() > 0) {
    Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> rm = d_shaped;
    const Eigen::Map<const Eigen::VectorXd> flat(rm.data(), 3 * n);
    grad.shape = model.shape_blendshapes.transpose() * flat;
  } else {
    grad.shape.resize(0);
  }
  return grad;
}

Points3 regress_keypoints(const BodyModelSpec& model, const Points3& mesh) {
  if (mesh.rows() != model.vertex_count()) {
    throw DimensionError("mesh row count does not match the keypoint regressor");
  }
  return model.keypoint_regressor * mesh;
}

Points3 regress_joints(const BodyModelSpec& model, const Points3& mesh) {
  if (mesh.rows() != model.vertex_count()) {
    throw DimensionError("mesh row count does not match the joint regressor");
  }
  return model.joint_regressor * mesh;
}

}  // namespace densefit

namespace densefit {

Eigen::MatrixXd vertex_jacobian(const BodyModelSpec& model, const BodyParams& params, const ForwardState& s,
                                const ForwardOptions& options) {
  check_dims(model, params);
  const int n = model.vertex_count();
  const int jn = model.joint_count();
  const int nb = model.shape_count();
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(3 * n, 3 * jn + nb);

  // A change of joint j's local rotation turns its whole subtree about the
  // joint's world position with angular velocity omega.
  std::vector<std::array<Mat3, 3>> d_local(static_cast<std::size_t>(jn));
  std::vector<std::array<Vec3, 3>> omega(static_cast<std::size_t>(jn));
  for (int j = 0; j < jn; ++j) {
    d_local[j] = rodrigues_jacobian(params.pose.segment<3>(3 * j));
    const int p = model.parents[j];
    const Mat3 parent_rot = p < 0 ? Mat3::Identity() : s.global_rotation[p];
    for (int c = 0; c < 3; ++c) {
      const Mat3 m = d_local[j][c] * s.local_rotation[j].transpose();
      const Vec3 w(0.5 * (m(2, 1) - m(1, 2)), 0.5 * (m(0, 2) - m(2, 0)), 0.5 * (m(1, 0) - m(0, 1)));
      omega[j][c] = parent_rot * w;
    }
  }

  std::vector<Vec3> subtree_sum(static_cast<std::size_t>(jn));
  std::vector<double> subtree_weight(static_cast<std::size_t>(jn));
  for (int i = 0; i < n; ++i) {
    std::fill(subtree_sum.begin(), subtree_sum.end(), Vec3::Zero());
    std::fill(subtree_weight.begin(), subtree_weight.end(), 0.0);
    const Vec3 p = s.posed.row(i).transpose();
    for (int k = 0; k < jn; ++k) {
      const double w = model.skinning_weights(i, k);
      if (w == 0.0) continue;
      const Vec3 q = w * (s.skin_rotation[k] * p + s.skin_translation[k]);
      for (int a = k; a >= 0; a = model.parents[a]) {
        subtree_sum[a] += q;
        subtree_weight[a] += w;
      }
    }
    for (int j = 0; j < jn; ++j) {
      if (subtree_weight[j] == 0.0) continue;
      const Vec3 arm = subtree_sum[j] - subtree_weight[j] * s.global_translation[j];
      for (int c = 0; c < 3; ++c) jac.block<3, 1>(3 * i, 3 * j + c) = omega[j][c].cross(arm);
    }
  }

  auto skin_linear = [&](int i, const Vec3& d_posed, const std::vector<Vec3>* d_translation) {
    Vec3 out = Vec3::Zero();
    for (int k = 0; k < jn; ++k) {
      const double w = model.skinning_weights(i, k);
      if (w == 0.0) continue;
      out += w * (s.skin_rotation[k] * d_posed);
      if (d_translation) out += w * (*d_translation)[k];
    }
    return out;
  };

  std::vector<Vec3> d_global_t(static_cast<std::size_t>(jn));
  std::vector<Vec3> d_skin_t(static_cast<std::size_t>(jn));
  for (int b = 0; b < nb; ++b) {
    const Eigen::VectorXd col = model.shape_blendshapes.col(b);
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>> d_shaped(col.data(), n, 3);
    const Points3 d_joints = model.joint_regressor * d_shaped;
    for (int j = 0; j < jn; ++j) {
      const int p = model.parents[j];
      const Vec3 dj = d_joints.row(j).transpose();
      d_global_t[j] = p < 0 ? dj : Vec3(d_global_t[p] + s.global_rotation[p] * (dj - d_joints.row(p).transpose()));
      d_skin_t[j] = d_global_t[j] - s.global_rotation[j] * dj;
    }
    for (int i = 0; i < n; ++i) {
      jac.block<3, 1>(3 * i, 3 * jn + b) = skin_linear(i, d_shaped.row(i).transpose(), &d_skin_t);
    }
  }

  if (options.pose_blendshapes && model.has_pose_blendshapes()) {
    for (int j = 1; j < jn; ++j) {
      for (int c = 0; c < 3; ++c) {
        Eigen::Matrix<double, 9, 1> feature;
        for (int a = 0; a < 3; ++a)
          for (int e = 0; e < 3; ++e) feature[3 * a + e] = d_local[j][c](a, e);
        const Eigen::VectorXd d_posed = model.pose_blendshapes.middleCols(9 * (j - 1), 9) * feature;
        for (int i = 0; i < n; ++i) {
          jac.block<3, 1>(3 * i, 3 * j + c) += skin_linear(i, d_posed.segment<3>(3 * i), nullptr);
        }
      }
    }
  }
  return jac;
}

}  // namespace densefit
