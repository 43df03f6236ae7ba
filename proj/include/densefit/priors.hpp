#pragma once

#include "densefit/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace densefit {

enum class GmmMode { MinComponent, LogSumExp };

/// Gaussian mixture over body-pose coordinates (pose without the root's three).
class GmmPrior {
 public:
  GmmPrior() = default;
  /// Throws InvariantError when a covariance is not SPD or weights do not sum to 1.
  GmmPrior(Eigen::MatrixXd means, std::vector<Eigen::MatrixXd> covariances, Eigen::VectorXd weights);

  static GmmPrior from_precisions(Eigen::MatrixXd means, std::vector<Eigen::MatrixXd> precisions,
                                  Eigen::VectorXd weights);

  int components() const { return static_cast<int>(weights_.size()); }
  int dim() const { return static_cast<int>(means_.cols()); }
  const Eigen::MatrixXd& means() const { return means_; }
  const std::vector<Eigen::MatrixXd>& precisions() const { return precisions_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  const Eigen::VectorXd& log_normalizers() const { return log_normalizers_; }

  /// ½(x-μ_k)ᵀΛ_k(x-μ_k) - log w_k + log-normalizer_k.
  double component_energy(int k, const Eigen::VectorXd& x) const;

 private:
  void finish();

  Eigen::MatrixXd means_;                     // K×D
  std::vector<Eigen::MatrixXd> precisions_;   // K of D×D
  Eigen::VectorXd weights_;                   // K
  Eigen::VectorXd log_normalizers_;           // K: (D/2) log 2π - ½ log det Λ
};

/// Negative log likelihood; `gradient` (optional) receives d/dx.
double gmm_nll(const GmmPrior& prior, const Eigen::VectorXd& x, GmmMode mode = GmmMode::MinComponent,
               Eigen::VectorXd* gradient = nullptr);

/// ||β||²
double shape_reg(const Eigen::VectorXd& shape, Eigen::VectorXd* gradient = nullptr);

/// Σ exp(sign_i · pose[index_i]).
double bending(const Eigen::VectorXd& pose, const std::vector<int>& hinge_indices,
               const std::vector<double>& signs, Eigen::VectorXd* gradient = nullptr);

/// EM with k-means++ seeding; rows of `samples` are observations.
/// Stops when the mean log-likelihood changes by < 1e-8 or after 500 iterations.
GmmPrior fit_gmm(const Eigen::MatrixXd& samples, int components, std::uint64_t seed);

/// JSON schema: header K, D; arrays means (K×D), precisions (K×D×D), weights (K).
void save_prior(const GmmPrior& prior, const std::filesystem::path& path);
GmmPrior load_prior(const std::filesystem::path& path);

}  // namespace densefit
