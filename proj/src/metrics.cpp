#include "densefit/metrics.hpp"

#include <Eigen/SVD>

namespace densefit {

namespace {

constexpr double kMillimeters = 1000.0;

void check_pair(const Points3& pred, const Points3& gt) {
  if (pred.rows() != gt.rows()) throw DimensionError("metric point sets differ in size");
  if (pred.rows() == 0) throw EmptyDomainError("metric needs at least one point");
}

double mean_distance(const Points3& a, const Points3& b) {
  return (a - b).rowwise().norm().mean() * kMillimeters;
}

Points3 centered(const Points3& p) { return p.rowwise() - p.colwise().mean(); }

}  // namespace

double mpjpe(const Points3& pred, const Points3& gt, const MetricOptions& options) {
  check_pair(pred, gt);
  if (!options.root_align) return mean_distance(pred, gt);
  return mean_distance(pred.rowwise() - pred.row(0), gt.rowwise() - gt.row(0));
}

Points3 Similarity::apply(const Points3& points) const {
  return ((scale * points * rotation.transpose()).rowwise() + translation.transpose());
}

Similarity pa_align(const Points3& pred, const Points3& gt) {
  check_pair(pred, gt);
  if (pred.rows() < 3) throw InvariantError("Procrustes alignment needs at least 3 points");
  const Points3 p = centered(pred);
  const Points3 g = centered(gt);
  Eigen::JacobiSVD<Mat3> shape_svd(Mat3(p.transpose() * p));
  const Vec3 sv = shape_svd.singularValues();
  if (!(sv[1] > 1e-12 * std::max(sv[0], 1e-300))) {
    throw InvariantError("Procrustes alignment needs non-collinear points");
  }

  const Mat3 cov = g.transpose() * p;  // Σ g_i p_iᵀ
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) d(2, 2) = -1.0;

  Similarity out;
  out.rotation = svd.matrixU() * d * svd.matrixV().transpose();
  out.scale = (svd.singularValues().asDiagonal() * d).trace() / p.squaredNorm();
  out.translation = gt.colwise().mean().transpose() - out.scale * out.rotation * pred.colwise().mean().transpose();
  return out;
}

double pa_mpjpe(const Points3& pred, const Points3& gt) {
  return mean_distance(pa_align(pred, gt).apply(pred), gt);
}

double n_mpjpe(const Points3& pred, const Points3& gt) {
  check_pair(pred, gt);
  const Points3 p = centered(pred);
  const Points3 g = centered(gt);
  const double pp = p.squaredNorm();
  const double s = pp > 0.0 ? (p.array() * g.array()).sum() / pp : 0.0;
  return mean_distance(s * p, g);
}

MetricsReport report(const Points3& pred_mesh, const Points3& gt_mesh, const BodyModelSpec& model,
                     const MetricOptions& options) {
  const Points3 pj = regress_keypoints(model, pred_mesh);
  const Points3 gj = regress_keypoints(model, gt_mesh);
  MetricsReport r;
  r.mpjpe = mpjpe(pj, gj, options);
  r.pa_mpjpe = pa_mpjpe(pj, gj);
  r.n_mpjpe = n_mpjpe(pj, gj);
  r.pve = pve(pred_mesh, gt_mesh, options);
  r.pa_pve = pa_pve(pred_mesh, gt_mesh);
  r.n_pve = n_pve(pred_mesh, gt_mesh);
  return r;
}

}  // namespace densefit
