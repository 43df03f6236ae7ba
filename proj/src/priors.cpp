#include "densefit/priors.hpp"

#include "json_arrays.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace densefit {

namespace {

constexpr double kCovarianceFloor = 1e-6;

double log_det_spd(const Eigen::MatrixXd& m, const char* what, int k) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << what << " " << k << " is not symmetric positive definite";
    throw InvariantError(msg.str());
  }
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

void check_symmetric(const Eigen::MatrixXd& m, const char* what, int k) {
  if (!m.isApprox(m.transpose(), 1e-12) && (m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    std::ostringstream msg;
    msg << what << " " << k << " is not symmetric";
    throw InvariantError(msg.str());
  }
}

}  // namespace

GmmPrior::GmmPrior(Eigen::MatrixXd means, std::vector<Eigen::MatrixXd> covariances, Eigen::VectorXd weights)
    : means_(std::move(means)), weights_(std::move(weights)) {
  if (static_cast<Eigen::Index>(covariances.size()) != means_.rows()) {
    throw DimensionError("GMM needs one covariance per component");
  }
  precisions_.reserve(covariances.size());
  for (std::size_t k = 0; k < covariances.size(); ++k) {
    const auto& cov = covariances[k];
    if (cov.rows() != means_.cols() || cov.cols() != means_.cols()) {
      throw DimensionError("GMM covariance has the wrong size");
    }
    check_symmetric(cov, "covariance", static_cast<int>(k));
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
      std::ostringstream msg;
      msg << "covariance " << k << " is not symmetric positive definite";
      throw InvariantError(msg.str());
    }
    Eigen::MatrixXd prec = llt.solve(Eigen::MatrixXd::Identity(cov.rows(), cov.cols()));
    precisions_.push_back(0.5 * (prec + prec.transpose()));
  }
  finish();
}

GmmPrior GmmPrior::from_precisions(Eigen::MatrixXd means, std::vector<Eigen::MatrixXd> precisions,
                                   Eigen::VectorXd weights) {
  GmmPrior g;
  g.means_ = std::move(means);
  g.precisions_ = std::move(precisions);
  g.weights_ = std::move(weights);
  if (static_cast<Eigen::Index>(g.precisions_.size()) != g.means_.rows()) {
    throw DimensionError("GMM needs one precision matrix per component");
  }
  for (std::size_t k = 0; k < g.precisions_.size(); ++k) {
    const auto& p = g.precisions_[k];
    if (p.rows() != g.means_.cols() || p.cols() != g.means_.cols()) {
      throw DimensionError("GMM precision has the wrong size");
    }
    check_symmetric(p, "precision", static_cast<int>(k));
  }
  g.finish();
  return g;
}

void GmmPrior::finish() {
  const int k_count = static_cast<int>(means_.rows());
  if (k_count == 0 || weights_.size() != k_count) {
    throw DimensionError("GMM needs at least one component and one weight per component");
  }
  if (weights_.minCoeff() <= 0.0 || std::abs(weights_.sum() - 1.0) > 1e-9) {
    throw InvariantError("GMM weights must be positive and sum to 1");
  }
  const double d = static_cast<double>(means_.cols());
  log_normalizers_.resize(k_count);
  for (int k = 0; k < k_count; ++k) {
    const double log_det_prec = log_det_spd(precisions_[k], "precision", k);
    log_normalizers_[k] = 0.5 * d * std::log(2.0 * std::numbers::pi) - 0.5 * log_det_prec;
  }
}

double GmmPrior::component_energy(int k, const Eigen::VectorXd& x) const {
  const Eigen::VectorXd diff = x - means_.row(k).transpose();
  return 0.5 * diff.dot(precisions_[k] * diff) - std::log(weights_[k]) + log_normalizers_[k];
}

double gmm_nll(const GmmPrior& prior, const Eigen::VectorXd& x, GmmMode mode, Eigen::VectorXd* gradient) {
  if (x.size() != prior.dim()) {
    throw DimensionError("pose prior dimension mismatch");
  }
  const int kc = prior.components();
  Eigen::VectorXd energy(kc);
  for (int k = 0; k < kc; ++k) energy[k] = prior.component_energy(k, x);

  if (mode == GmmMode::MinComponent) {
    Eigen::Index best = 0;
    const double value = energy.minCoeff(&best);
    if (gradient) {
      *gradient = prior.precisions()[best] * (x - prior.means().row(best).transpose());
    }
    return value;
  }

  // -log Σ exp(-e_k)
  const double lo = energy.minCoeff();
  const Eigen::VectorXd resp = (-(energy.array() - lo)).exp();
  const double total = resp.sum();
  const double value = lo - std::log(total);
  if (gradient) {
    gradient->setZero(x.size());
    for (int k = 0; k < kc; ++k) {
      *gradient += (resp[k] / total) * (prior.precisions()[k] * (x - prior.means().row(k).transpose()));
    }
  }
  return value;
}

double shape_reg(const Eigen::VectorXd& shape, Eigen::VectorXd* gradient) {
  if (gradient) *gradient = 2.0 * shape;
  return shape.squaredNorm();
}

double bending(const Eigen::VectorXd& pose, const std::vector<int>& hinge_indices,
               const std::vector<double>& signs, Eigen::VectorXd* gradient) {
  if (hinge_indices.size() != signs.size()) {
    throw DimensionError("bending needs one sign per hinge index");
  }
  if (gradient) gradient->setZero(pose.size());
  double sum = 0.0;
  for (std::size_t h = 0; h < hinge_indices.size(); ++h) {
    const int i = hinge_indices[h];
    if (i < 0 || i >= pose.size()) {
      std::ostringstream msg;
      msg << "hinge index " << i << " outside pose vector of size " << pose.size();
      throw DimensionError(msg.str());
    }
    const double e = std::exp(signs[h] * pose[i]);
    sum += e;
    if (gradient) (*gradient)[i] += signs[h] * e;
  }
  return sum;
}

GmmPrior fit_gmm(const Eigen::MatrixXd& samples, int components, std::uint64_t seed) {
  const Eigen::Index s = samples.rows();
  const Eigen::Index d = samples.cols();
  if (components < 1) {
    throw InvariantError("GMM needs at least one component");
  }
  if (s < 10 * static_cast<Eigen::Index>(components)) {
    std::ostringstream msg;
    msg << "fit_gmm needs at least " << 10 * components << " samples, got " << s;
    throw InvariantError(msg.str());
  }
  const int kc = components;
  std::mt19937_64 rng(seed);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);

  // k-means++ seeding.
  Eigen::MatrixXd means(kc, d);
  {
    std::uniform_int_distribution<Eigen::Index> first(0, s - 1);
    means.row(0) = samples.row(first(rng));
    Eigen::VectorXd dist = (samples.rowwise() - means.row(0)).rowwise().squaredNorm();
    for (int k = 1; k < kc; ++k) {
      std::discrete_distribution<Eigen::Index> pick(dist.data(), dist.data() + dist.size());
      means.row(k) = samples.row(pick(rng));
      dist = dist.cwiseMin((samples.rowwise() - means.row(k)).rowwise().squaredNorm());
    }
  }
  const Eigen::RowVectorXd global_mean = samples.colwise().mean();
  const Eigen::MatrixXd centered = samples.rowwise() - global_mean;
  const Eigen::MatrixXd global_cov = centered.transpose() * centered / static_cast<double>(s) + kCovarianceFloor * eye;
  std::vector<Eigen::MatrixXd> covs(kc, global_cov);
  Eigen::VectorXd weights = Eigen::VectorXd::Constant(kc, 1.0 / kc);

  const double log_2pi = std::log(2.0 * std::numbers::pi);
  Eigen::MatrixXd log_resp(s, kc);
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 500; ++iter) {
    // E step.
    for (int k = 0; k < kc; ++k) {
      Eigen::LLT<Eigen::MatrixXd> llt(covs[k]);
      const Eigen::MatrixXd diff = (samples.rowwise() - means.row(k)).transpose();
      const Eigen::MatrixXd y = llt.matrixL().solve(diff);
      const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
      log_resp.col(k) = (-0.5 * y.colwise().squaredNorm().array() - 0.5 * log_det -
                         0.5 * static_cast<double>(d) * log_2pi + std::log(weights[k]))
                            .transpose();
    }
    double ll = 0.0;
    for (Eigen::Index i = 0; i < s; ++i) {
      const double mx = log_resp.row(i).maxCoeff();
      const double lse = mx + std::log((log_resp.row(i).array() - mx).exp().sum());
      log_resp.row(i).array() -= lse;
      ll += lse;
    }
    ll /= static_cast<double>(s);
    const Eigen::MatrixXd resp = log_resp.array().exp();

    // M step.
    for (int k = 0; k < kc; ++k) {
      const double nk = resp.col(k).sum();
      if (nk < 1e-8) continue;
      weights[k] = nk / static_cast<double>(s);
      means.row(k) = (resp.col(k).transpose() * samples) / nk;
      const Eigen::MatrixXd diff = samples.rowwise() - means.row(k);
      covs[k] = (diff.transpose() * resp.col(k).asDiagonal() * diff) / nk + kCovarianceFloor * eye;
      covs[k] = 0.5 * (covs[k] + covs[k].transpose()).eval();
    }
    weights /= weights.sum();

    if (std::abs(ll - prev_ll) < 1e-8) break;
    prev_ll = ll;
  }
  return GmmPrior(means, covs, weights);
}

using detail::json;

void save_prior(const GmmPrior& prior, const std::filesystem::path& path) {
  json doc;
  doc["K"] = prior.components();
  doc["D"] = prior.dim();
  doc["means"] = detail::flatten(prior.means());
  json precisions = json::array();
  for (const auto& p : prior.precisions())
    for (Eigen::Index r = 0; r < p.rows(); ++r)
      for (Eigen::Index c = 0; c < p.cols(); ++c) precisions.push_back(p(r, c));
  doc["precisions"] = precisions;
  doc["weights"] = detail::flatten(prior.weights());
  detail::write_json_file(path, doc);
}

GmmPrior load_prior(const std::filesystem::path& path) {
  const json doc = detail::read_json_file(path);
  const auto k = static_cast<Eigen::Index>(detail::get_count(doc, "K"));
  const auto d = static_cast<Eigen::Index>(detail::get_count(doc, "D"));
  Eigen::MatrixXd means = detail::unflatten(detail::get_doubles(doc, "means", k * d), k, d);
  const auto flat = detail::get_doubles(doc, "precisions", k * d * d);
  std::vector<Eigen::MatrixXd> precisions;
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::MatrixXd p(d, d);
    for (Eigen::Index r = 0; r < d; ++r)
      for (Eigen::Index q = 0; q < d; ++q) p(r, q) = flat[static_cast<std::size_t>((c * d + r) * d + q)];
    precisions.push_back(p);
  }
  Eigen::VectorXd weights = detail::unflatten(detail::get_doubles(doc, "weights", k), k, 1);
  return GmmPrior::from_precisions(std::move(means), std::move(precisions), std::move(weights));
}

}  // namespace densefit
