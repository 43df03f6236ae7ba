#pragma once

#include "densefit/body_model.hpp"
#include "densefit/camera.hpp"
#include "densefit/priors.hpp"
#include "densefit/types.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace densefit {

class FitError : public Error {
 public:
  using Error::Error;
};

/// Geman-McClure ρ(r²) = σ²·r² / (r² + σ²) on a squared residual norm.
double geman_mcclure(double residual_sq, double sigma);

enum class ScaleMode { Fixed, PersonSize };
enum class Optimizer { LevenbergMarquardt, Lbfgs, Adam };
enum class RobustMode { SquaredNorm, PerCoordinate };

struct ParameterSet {
  bool root_pose = false;
  bool body_pose = false;
  bool shape = false;
  bool camera_translation = false;

  static ParameterSet all() { return {true, true, true, true}; }
};

struct FitStage {
  std::string name;
  ParameterSet params;
  int iterations = 1;
  double step_size = 0.01;
};

struct FitConfig {
  double weight_data = 1.0;
  double weight_pose = 4.78 * 4.78;
  double weight_shape = 5.0 * 5.0;
  double weight_bending = 0.0;

  ScaleMode scale_mode = ScaleMode::PersonSize;
  std::optional<double> data_factor;  // defaults to the data term's own factor
  double reference_size = 200.0;      // pixels
  double sigma = 100.0;               // Geman-McClure scale, pixels
  RobustMode robust_mode = RobustMode::SquaredNorm;
  GmmMode gmm_mode = GmmMode::MinComponent;

  Optimizer optimizer = Optimizer::LevenbergMarquardt;
  std::vector<FitStage> stages = default_stages();
  double tolerance = 1e-10;           // relative objective decrease counted as stalled
  int max_backtracks = 8;
  int lbfgs_memory = 10;
  double initial_damping = 1e-3;  // Levenberg-Marquardt, relative to diag(H)
  double translation_step_scale = 0.1;  // Adam only
  double shape_step_scale = 2.0;        // Adam only

  bool pose_blendshapes = false;
  std::vector<int> hinge_indices;
  std::vector<double> hinge_signs;

  /// Stage 1: camera translation + root rotation (30 iterations).
  /// Stage 2: pose, shape, camera translation (70 iterations).
  /// For L-BFGS and Adam, step_size bounds the first step of a stage;
  /// Levenberg-Marquardt ignores it.
  static std::vector<FitStage> default_stages();
  int total_iterations() const;
};

void validate(const FitConfig& config);

constexpr double kDenseDataFactor = 0.4;
constexpr double kSparseDataFactor = 5.0;

/// Dense per-vertex targets (pixels) with visibility weights.
struct DenseTerm {
  Points2 targets;
  std::vector<double> weights;
};

/// Sparse keypoint targets (pixels) with confidences.
struct SparseTerm {
  Points2 joints;
  Eigen::VectorXd confidence;
};

struct DataTerm {
  std::variant<DenseTerm, SparseTerm> term;
  double person_size = 0.0;  // bbox diagonal of the initial rendering, pixels

  static DataTerm dense(Points2 targets, std::vector<double> weights, double person_size);
  static DataTerm sparse(Points2 joints, Eigen::VectorXd confidence, double person_size);

  bool is_dense() const { return std::holds_alternative<DenseTerm>(term); }
  double default_factor() const { return is_dense() ? kDenseDataFactor : kSparseDataFactor; }
};

/// Bounding-box diagonal of the valid pixels, in pixels (0 for an empty mask).
double person_size(const Mask& mask);

struct TermBreakdown {
  double data = 0.0;         // weighted data term
  double pose_prior = 0.0;   // weighted pose prior
  double shape_prior = 0.0;  // weighted shape regularizer
  double bending = 0.0;      // weighted bending term
  double total = 0.0;
};

/// Weighted fitting objective over x = [pose (3J) | shape (B) | camera translation (3)].
/// Camera intrinsics and rotation stay fixed at the values passed in.
class Objective {
 public:
  Objective(const BodyModelSpec& model, const Camera& camera, DataTerm data, const GmmPrior* prior,
            FitConfig config);

  int size() const;
  Eigen::VectorXd pack(const BodyParams& params, const Vec3& translation) const;
  BodyParams unpack_params(const Eigen::VectorXd& x) const;
  Camera unpack_camera(const Eigen::VectorXd& x) const;

  /// 1 for every coordinate in the subset, 0 elsewhere.
  Eigen::VectorXd mask(const ParameterSet& subset) const;

  /// Unweighted data term (factor and person-size scaling included).
  double data_term(const Eigen::VectorXd& x, Eigen::VectorXd* gradient = nullptr) const;

  /// Total and breakdown; `gradient` (optional) receives the full d/dx.
  TermBreakdown evaluate(const Eigen::VectorXd& x, Eigen::VectorXd* gradient = nullptr) const;

  /// Gauss-Newton approximation of d²/dx²: iteratively reweighted data term,
  /// exact curvature of the quadratic priors, diagonal of the bending term.
  Eigen::MatrixXd gauss_newton_hessian(const Eigen::VectorXd& x) const;

  const FitConfig& config() const { return config_; }
  const BodyModelSpec& model() const { return *model_; }

 private:
  double residual_scale() const;

  const BodyModelSpec* model_;
  Camera camera_;
  DataTerm data_;
  const GmmPrior* prior_;
  FitConfig config_;
};

/// Σ w_i ρ(scale·||π(M)_i - target_i||²) · factor.
double reproj_dense(const BodyModelSpec& model, const BodyParams& params, const Camera& camera,
                    const DenseTerm& term, const FitConfig& config, double person_size_px = 0.0);

/// Σ conf_j ρ(scale·||π(W·M)_j - joint_j||²) · factor.
double reproj_sparse(const BodyModelSpec& model, const BodyParams& params, const Camera& camera,
                     const SparseTerm& term, const FitConfig& config, double person_size_px = 0.0);

TermBreakdown objective(const BodyModelSpec& model, const BodyParams& params, const Camera& camera,
                        const DataTerm& data, const GmmPrior* prior, const FitConfig& config);

/// Analytic gradient restricted to `subset` (other entries are zero).
Eigen::VectorXd gradient(const Objective& objective, const Eigen::VectorXd& x, const ParameterSet& subset);

struct FitIteration {
  int iteration = 0;  // global, 1-based
  int stage = 0;
  TermBreakdown terms;
  bool accepted = false;
};

struct FitResult {
  BodyParams params;
  Camera camera;
  std::vector<FitIteration> trace;
  TermBreakdown initial;
  TermBreakdown final_terms;
  bool converged = false;
  int iterations = 0;
};

/// Staged refinement over parameter subsets with Levenberg-Marquardt (default),
/// L-BFGS with a backtracking line search, or Adam with step halving. Only
/// non-increasing steps are accepted, so the result is the best point seen.
FitResult fit(const BodyModelSpec& model, const BodyParams& init, const Camera& init_camera,
              const DataTerm& data, const GmmPrior* prior, const FitConfig& config);

/// CSV with columns iteration,stage,accepted,total,data,pose_prior,shape_prior,bending.
void write_trace_csv(const FitResult& result, std::ostream& out);

}  // namespace densefit
