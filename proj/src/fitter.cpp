#include "densefit/fitter.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>

namespace densefit {

double geman_mcclure(double residual_sq, double sigma) {
  const double s2 = sigma * sigma;
  return s2 * residual_sq / (residual_sq + s2);
}

namespace {

// dρ/d(r²)
double geman_mcclure_derivative(double residual_sq, double sigma) {
  const double s2 = sigma * sigma;
  const double denom = residual_sq + s2;
  return s2 * s2 / (denom * denom);
}

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

std::vector<FitStage> FitConfig::default_stages() {
  ParameterSet global;
  global.root_pose = true;
  global.camera_translation = true;
  return {{"global", global, 30, 0.02}, {"full", ParameterSet::all(), 70, 0.01}};
}

int FitConfig::total_iterations() const {
  int total = 0;
  for (const auto& s : stages) total += s.iterations;
  return total;
}

void validate(const FitConfig& config) {
  if (config.weight_data < 0 || config.weight_pose < 0 || config.weight_shape < 0 || config.weight_bending < 0) {
    throw InvariantError("objective weights must be non-negative");
  }
  if (!(config.sigma > 0.0) || !(config.reference_size > 0.0)) {
    throw InvariantError("sigma and reference_size must be positive");
  }
  if (config.data_factor && *config.data_factor < 0.0) {
    throw InvariantError("data_factor must be non-negative");
  }
  for (const auto& s : config.stages) {
    if (s.iterations < 1 || !(s.step_size > 0.0)) {
      throw InvariantError("stage '" + s.name + "' needs iterations >= 1 and a positive step size");
    }
  }
  if (!(config.initial_damping > 0.0)) throw InvariantError("initial_damping must be positive");
  if (config.lbfgs_memory < 1 || config.max_backtracks < 0) {
    throw InvariantError("lbfgs_memory must be >= 1 and max_backtracks >= 0");
  }
  if (config.hinge_indices.size() != config.hinge_signs.size()) {
    throw InvariantError("hinge_indices and hinge_signs differ in length");
  }
}

DataTerm DataTerm::dense(Points2 targets, std::vector<double> weights, double person_size) {
  if (static_cast<Eigen::Index>(weights.size()) != targets.rows()) {
    throw DimensionError("dense term needs one weight per target");
  }
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0)) {
    throw EmptyDomainError("dense reprojection term has no visible vertices");
  }
  return {DenseTerm{std::move(targets), std::move(weights)}, person_size};
}

DataTerm DataTerm::sparse(Points2 joints, Eigen::VectorXd confidence, double person_size) {
  if (confidence.size() != joints.rows()) {
    throw DimensionError("sparse term needs one confidence per joint");
  }
  if (!(confidence.sum() > 0.0) || confidence.minCoeff() < 0.0) {
    throw EmptyDomainError("sparse reprojection term has no confident keypoints");
  }
  return {SparseTerm{std::move(joints), std::move(confidence)}, person_size};
}

double person_size(const Mask& mask) {
  int x0 = mask.width(), y0 = mask.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) return 0.0;
  const double w = x1 - x0 + 1;
  const double h = y1 - y0 + 1;
  return std::sqrt(w * w + h * h);
}

Objective::Objective(const BodyModelSpec& model, const Camera& camera, DataTerm data, const GmmPrior* prior,
                     FitConfig config)
    : model_(&model), camera_(camera), data_(std::move(data)), prior_(prior), config_(std::move(config)) {
  validate(config_);
  validate(camera_);
  if (const auto* dense = std::get_if<DenseTerm>(&data_.term)) {
    if (dense->targets.rows() != model.vertex_count()) {
      throw DimensionError("dense targets must have one row per vertex");
    }
  } else {
    const auto& sparse = std::get<SparseTerm>(data_.term);
    if (sparse.joints.rows() != model.keypoint_count()) {
      throw DimensionError("sparse targets must have one row per keypoint");
    }
  }
  if (prior_ && prior_->dim() != model.pose_dim() - 3) {
    throw DimensionError("pose prior dimension must be 3J - 3");
  }
  if (config_.scale_mode == ScaleMode::PersonSize && !(data_.person_size > 0.0)) {
    throw InvariantError("person-size scaling needs a positive person size");
  }
}

int Objective::size() const { return model_->pose_dim() + model_->shape_count() + 3; }

Eigen::VectorXd Objective::pack(const BodyParams& params, const Vec3& translation) const {
  Eigen::VectorXd x(size());
  x << params.pose, params.shape, translation;
  return x;
}

BodyParams Objective::unpack_params(const Eigen::VectorXd& x) const {
  return {x.head(model_->pose_dim()), x.segment(model_->pose_dim(), model_->shape_count())};
}

Camera Objective::unpack_camera(const Eigen::VectorXd& x) const {
  Camera cam = camera_;
  cam.translation = x.tail<3>();
  return cam;
}

Eigen::VectorXd Objective::mask(const ParameterSet& subset) const {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(size());
  const int pd = model_->pose_dim();
  if (subset.root_pose) m.head<3>().setOnes();
  if (subset.body_pose) m.segment(3, pd - 3).setOnes();
  if (subset.shape) m.segment(pd, model_->shape_count()).setOnes();
  if (subset.camera_translation) m.tail<3>().setOnes();
  return m;
}

double Objective::residual_scale() const {
  if (config_.scale_mode == ScaleMode::Fixed) return 1.0;
  const double ratio = config_.reference_size / data_.person_size;
  return ratio * ratio;
}

double Objective::data_term(const Eigen::VectorXd& x, Eigen::VectorXd* gradient) const {
  const BodyModelSpec& model = *model_;
  const BodyParams params = unpack_params(x);
  const Vec3 translation = x.tail<3>();
  const ForwardOptions options{config_.pose_blendshapes};
  const ForwardState state = forward_state(model, params, options);

  const bool dense = data_.is_dense();
  const Points3 points = dense ? state.vertices : Points3(model.keypoint_regressor * state.vertices);
  const Points2& targets = dense ? std::get<DenseTerm>(data_.term).targets : std::get<SparseTerm>(data_.term).joints;
  auto weight = [&](Eigen::Index i) {
    return dense ? std::get<DenseTerm>(data_.term).weights[static_cast<std::size_t>(i)]
                 : std::get<SparseTerm>(data_.term).confidence[i];
  };

  const double scale = residual_scale();
  const double factor = config_.data_factor.value_or(data_.default_factor());
  const double sigma = config_.sigma;
  const Mat3& rot = camera_.rotation;

  double value = 0.0;
  Points3 point_grad;
  Vec3 d_translation = Vec3::Zero();
  if (gradient) point_grad = Points3::Zero(points.rows(), 3);

  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const double w = weight(i);
    if (w == 0.0) continue;
    const Vec3 pc = rot * points.row(i).transpose() + translation;
    if (!(pc.z() > kMinDepth)) return kInf;
    const double inv_z = 1.0 / pc.z();
    const Vec2 pixel(camera_.fx * pc.x() * inv_z + camera_.cx, camera_.fy * pc.y() * inv_z + camera_.cy);
    const Vec2 r = pixel - targets.row(i).transpose();

    Vec2 d_r;
    if (config_.robust_mode == RobustMode::SquaredNorm) {
      const double s = scale * r.squaredNorm();
      value += w * geman_mcclure(s, sigma);
      d_r = w * geman_mcclure_derivative(s, sigma) * scale * 2.0 * r;
    } else {
      for (int c = 0; c < 2; ++c) {
        const double s = scale * r[c] * r[c];
        value += w * geman_mcclure(s, sigma);
        d_r[c] = w * geman_mcclure_derivative(s, sigma) * scale * 2.0 * r[c];
      }
    }
    if (!gradient) continue;
    const Vec3 d_pc(camera_.fx * inv_z * d_r.x(), camera_.fy * inv_z * d_r.y(),
                    -(camera_.fx * pc.x() * d_r.x() + camera_.fy * pc.y() * d_r.y()) * inv_z * inv_z);
    point_grad.row(i) = (rot.transpose() * d_pc).transpose();
    d_translation += d_pc;
  }
  value *= factor;

  if (gradient) {
    const Points3 vertex_grad = dense ? point_grad : Points3(model.keypoint_regressor.transpose() * point_grad);
    const BodyParamsGradient bp = backward(model, params, state, vertex_grad, options);
    gradient->resize(size());
    *gradient << bp.pose, bp.shape, d_translation;
    *gradient *= factor;
  }
  return value;
}

Eigen::MatrixXd Objective::gauss_newton_hessian(const Eigen::VectorXd& x) const {
  const BodyModelSpec& model = *model_;
  const int pd = model.pose_dim();
  const int nb = model.shape_count();
  const int np = pd + nb;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(size(), size());

  if (config_.weight_data > 0.0) {
    const BodyParams params = unpack_params(x);
    const Vec3 translation = x.tail<3>();
    const ForwardOptions options{config_.pose_blendshapes};
    const ForwardState state = forward_state(model, params, options);
    const Eigen::MatrixXd jv = vertex_jacobian(model, params, state, options);

    const bool dense = data_.is_dense();
    const Points3 points = dense ? state.vertices : Points3(model.keypoint_regressor * state.vertices);
    const Points2& targets =
        dense ? std::get<DenseTerm>(data_.term).targets : std::get<SparseTerm>(data_.term).joints;
    // Keypoint Jacobians: coordinate c of keypoint m is W(m,:) times the c rows of jv.
    std::array<Eigen::MatrixXd, 3> jk;
    if (!dense) {
      for (int c = 0; c < 3; ++c) {
        const Eigen::Map<const Eigen::MatrixXd, 0, Eigen::Stride<Eigen::Dynamic, 3>> rows(
            jv.data() + c, model.vertex_count(), np, Eigen::Stride<Eigen::Dynamic, 3>(jv.outerStride(), 3));
        jk[c] = model.keypoint_regressor * rows;
      }
    }
    const double scale = residual_scale();
    const double factor = config_.data_factor.value_or(data_.default_factor());
    const Mat3& rot = camera_.rotation;

    Eigen::MatrixXd a(2 * points.rows(), size());
    Eigen::Index row = 0;
    Eigen::Matrix<double, 3, Eigen::Dynamic> jp(3, np);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      const double w = dense ? std::get<DenseTerm>(data_.term).weights[static_cast<std::size_t>(i)]
                             : std::get<SparseTerm>(data_.term).confidence[i];
      if (w == 0.0) continue;
      const Vec3 pc = rot * points.row(i).transpose() + translation;
      if (!(pc.z() > kMinDepth)) continue;
      const double inv_z = 1.0 / pc.z();
      Eigen::Matrix<double, 2, 3> proj;
      proj << camera_.fx * inv_z, 0.0, -camera_.fx * pc.x() * inv_z * inv_z, 0.0, camera_.fy * inv_z,
          -camera_.fy * pc.y() * inv_z * inv_z;
      const Vec2 pixel(camera_.fx * pc.x() * inv_z + camera_.cx, camera_.fy * pc.y() * inv_z + camera_.cy);
      const Vec2 r = pixel - targets.row(i).transpose();
      Vec2 alpha;
      if (config_.robust_mode == RobustMode::SquaredNorm) {
        alpha.setConstant(2.0 * factor * w * scale * geman_mcclure_derivative(scale * r.squaredNorm(), config_.sigma));
      } else {
        for (int c = 0; c < 2; ++c)
          alpha[c] = 2.0 * factor * w * scale * geman_mcclure_derivative(scale * r[c] * r[c], config_.sigma);
      }
      if (dense) {
        jp = jv.middleRows<3>(3 * i);
      } else {
        for (int c = 0; c < 3; ++c) jp.row(c) = jk[c].row(i);
      }
      const Eigen::Matrix<double, 2, 3> pw = proj * rot;
      for (int c = 0; c < 2; ++c) {
        const double sw = std::sqrt(alpha[c]);
        a.row(row).head(np) = sw * (pw.row(c) * jp);
        a.row(row).tail<3>() = sw * proj.row(c);
        ++row;
      }
    }
    h.selfadjointView<Eigen::Lower>().rankUpdate(a.topRows(row).transpose(), config_.weight_data);
    h.triangularView<Eigen::StrictlyUpper>() = h.transpose();
  }

  if (prior_ && config_.weight_pose > 0.0) {
    const Eigen::VectorXd body = x.segment(3, pd - 3);
    const int kc = prior_->components();
    Eigen::VectorXd energy(kc);
    for (int k = 0; k < kc; ++k) energy[k] = prior_->component_energy(k, body);
    Eigen::MatrixXd curvature = Eigen::MatrixXd::Zero(pd - 3, pd - 3);
    if (config_.gmm_mode == GmmMode::MinComponent) {
      Eigen::Index best = 0;
      energy.minCoeff(&best);
      curvature = prior_->precisions()[best];
    } else {
      const Eigen::VectorXd resp = (-(energy.array() - energy.minCoeff())).exp();
      for (int k = 0; k < kc; ++k) curvature += (resp[k] / resp.sum()) * prior_->precisions()[k];
    }
    h.block(3, 3, pd - 3, pd - 3) += config_.weight_pose * curvature;
  }
  if (config_.weight_shape > 0.0 && nb > 0) {
    h.block(pd, pd, nb, nb).diagonal().array() += 2.0 * config_.weight_shape;
  }
  if (config_.weight_bending > 0.0) {
    for (std::size_t k = 0; k < config_.hinge_indices.size(); ++k) {
      const int i = config_.hinge_indices[k];
      if (i < 0 || i >= pd) throw DimensionError("hinge index outside the pose vector");
      h(i, i) += config_.weight_bending * std::exp(config_.hinge_signs[k] * x[i]);
    }
  }
  return h;
}

TermBreakdown Objective::evaluate(const Eigen::VectorXd& x, Eigen::VectorXd* gradient) const {
  TermBreakdown terms;
  const int pd = model_->pose_dim();
  const int nb = model_->shape_count();
  if (gradient) gradient->setZero(size());

  if (config_.weight_data > 0.0) {
    Eigen::VectorXd g;
    terms.data = config_.weight_data * data_term(x, gradient ? &g : nullptr);
    if (gradient && std::isfinite(terms.data)) *gradient += config_.weight_data * g;
  }
  if (prior_ && config_.weight_pose > 0.0) {
    Eigen::VectorXd g;
    terms.pose_prior = config_.weight_pose * gmm_nll(*prior_, x.segment(3, pd - 3), config_.gmm_mode, gradient ? &g : nullptr);
    if (gradient) gradient->segment(3, pd - 3) += config_.weight_pose * g;
  }
  if (config_.weight_shape > 0.0 && nb > 0) {
    Eigen::VectorXd g;
    terms.shape_prior = config_.weight_shape * shape_reg(x.segment(pd, nb), gradient ? &g : nullptr);
    if (gradient) gradient->segment(pd, nb) += config_.weight_shape * g;
  }
  if (config_.weight_bending > 0.0 && !config_.hinge_indices.empty()) {
    Eigen::VectorXd g;
    terms.bending = config_.weight_bending *
                    bending(x.head(pd), config_.hinge_indices, config_.hinge_signs, gradient ? &g : nullptr);
    if (gradient) gradient->head(pd) += config_.weight_bending * g;
  }
  terms.total = terms.data + terms.pose_prior + terms.shape_prior + terms.bending;
  return terms;
}

double reproj_dense(const BodyModelSpec& model, const BodyParams& params, const Camera& camera,
                    const DenseTerm& term, const FitConfig& config, double person_size_px) {
  const DataTerm data = DataTerm::dense(term.targets, term.weights, person_size_px);
  const Objective obj(model, camera, data, nullptr, config);
  return obj.data_term(obj.pack(params, camera.translation));
}

double reproj_sparse(const BodyModelSpec& model, const BodyParams& params, const Camera& camera,
                     const SparseTerm& term, const FitConfig& config, double person_size_px) {
  const DataTerm data = DataTerm::sparse(term.joints, term.confidence, person_size_px);
  const Objective obj(model, camera, data, nullptr, config);
  return obj.data_term(obj.pack(params, camera.translation));
}

TermBreakdown objective(const BodyModelSpec& model, const BodyParams& params, const Camera& camera,
                        const DataTerm& data, const GmmPrior* prior, const FitConfig& config) {
  const Objective obj(model, camera, data, prior, config);
  return obj.evaluate(obj.pack(params, camera.translation));
}

Eigen::VectorXd gradient(const Objective& objective, const Eigen::VectorXd& x, const ParameterSet& subset) {
  Eigen::VectorXd g;
  objective.evaluate(x, &g);
  return g.cwiseProduct(objective.mask(subset));
}

namespace {

constexpr int kStallLimit = 5;

struct StageState {
  Eigen::VectorXd x;
  Eigen::VectorXd g;
  TermBreakdown terms;
};

void check_finite(const StageState& s, const FitStage& stage) {
  if (!std::isfinite(s.terms.total) || !s.g.allFinite()) {
    throw FitError("objective is not finite during stage '" + stage.name + "'");
  }
}

bool stalled_step(double decrease, double total, double tolerance) {
  return decrease <= tolerance * std::max(1.0, std::abs(total));
}

// Returns true when the stage stopped on stalled progress.
bool run_adam(const Objective& obj, const FitConfig& config, const FitStage& stage, int stage_index,
              const Eigen::VectorXd& active, StageState& s, FitResult& result, int& global_iter) {
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;
  Eigen::VectorXd m = Eigen::VectorXd::Zero(obj.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(obj.size());
  const Eigen::VectorXd on = active.cwiseSign();
  double lr = stage.step_size;
  int stalled = 0;

  for (int it = 1; it <= stage.iterations; ++it) {
    ++global_iter;
    const Eigen::VectorXd ga = s.g.cwiseProduct(on);
    m = beta1 * m + (1.0 - beta1) * ga;
    v = beta2 * v + (1.0 - beta2) * ga.cwiseProduct(ga);
    const Eigen::VectorXd m_hat = m / (1.0 - std::pow(beta1, it));
    const Eigen::VectorXd v_hat = v / (1.0 - std::pow(beta2, it));
    Eigen::VectorXd step = lr * active.cwiseProduct(m_hat.cwiseQuotient((v_hat.cwiseSqrt().array() + eps).matrix()));

    bool accepted = false;
    Eigen::VectorXd trial;
    TermBreakdown trial_terms;
    for (int bt = 0; bt <= config.max_backtracks; ++bt) {
      trial = s.x - step;
      trial_terms = obj.evaluate(trial);
      if (std::isfinite(trial_terms.total) && trial_terms.total <= s.terms.total) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (accepted) {
      const double decrease = s.terms.total - trial_terms.total;
      s.x = trial;
      s.terms = obj.evaluate(s.x, &s.g);
      check_finite(s, stage);
      stalled = stalled_step(decrease, s.terms.total, config.tolerance) ? stalled + 1 : 0;
    } else {
      lr *= 0.5;
      ++stalled;
    }
    result.trace.push_back({global_iter, stage_index, s.terms, accepted});
    if (stalled >= kStallLimit) return true;
  }
  return false;
}

bool run_lbfgs(const Objective& obj, const FitConfig& config, const FitStage& stage, int stage_index,
               const Eigen::VectorXd& active, StageState& s, FitResult& result, int& global_iter) {
  constexpr double kArmijo = 1e-4;
  const auto memory = static_cast<std::size_t>(std::max(1, config.lbfgs_memory));
  std::vector<Eigen::VectorXd> s_hist, y_hist;
  std::vector<double> rho_hist;
  Eigen::VectorXd g = s.g.cwiseProduct(active);
  int stalled = 0;

  for (int it = 1; it <= stage.iterations; ++it) {
    ++global_iter;
    // Two-loop recursion.
    Eigen::VectorXd q = g;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t k = s_hist.size(); k-- > 0;) {
      alpha[k] = rho_hist[k] * s_hist[k].dot(q);
      q -= alpha[k] * y_hist[k];
    }
    Eigen::VectorXd dir;
    if (s_hist.empty()) {
      const double gmax = g.cwiseAbs().maxCoeff();
      dir = gmax > 0.0 ? Eigen::VectorXd(-stage.step_size / gmax * g) : Eigen::VectorXd(-g);
    } else {
      const double gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      Eigen::VectorXd r = gamma * q;
      for (std::size_t k = 0; k < s_hist.size(); ++k) {
        const double beta = rho_hist[k] * y_hist[k].dot(r);
        r += (alpha[k] - beta) * s_hist[k];
      }
      dir = -r;
    }
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      // Not a descent direction: restart from scaled steepest descent.
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      const double gmax = g.cwiseAbs().maxCoeff();
      if (!(gmax > 0.0)) {
        result.trace.push_back({global_iter, stage_index, s.terms, false});
        return true;
      }
      dir = -stage.step_size / gmax * g;
      slope = g.dot(dir);
    }

    double step = 1.0;
    bool accepted = false;
    Eigen::VectorXd trial;
    TermBreakdown trial_terms;
    for (int bt = 0; bt <= config.max_backtracks; ++bt) {
      trial = s.x + step * dir;
      trial_terms = obj.evaluate(trial);
      if (std::isfinite(trial_terms.total) && trial_terms.total <= s.terms.total + kArmijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }

    if (accepted) {
      const double decrease = s.terms.total - trial_terms.total;
      const Eigen::VectorXd old_x = s.x;
      const Eigen::VectorXd old_g = g;
      s.x = trial;
      s.terms = obj.evaluate(s.x, &s.g);
      check_finite(s, stage);
      g = s.g.cwiseProduct(active);
      const Eigen::VectorXd sk = s.x - old_x;
      const Eigen::VectorXd yk = g - old_g;
      const double sy = sk.dot(yk);
      if (sy > 1e-10 * sk.norm() * yk.norm()) {
        if (s_hist.size() == memory) {
          s_hist.erase(s_hist.begin());
          y_hist.erase(y_hist.begin());
          rho_hist.erase(rho_hist.begin());
        }
        s_hist.push_back(sk);
        y_hist.push_back(yk);
        rho_hist.push_back(1.0 / sy);
      }
      stalled = stalled_step(decrease, s.terms.total, config.tolerance) ? stalled + 1 : 0;
    } else {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      ++stalled;
    }
    result.trace.push_back({global_iter, stage_index, s.terms, accepted});
    if (stalled >= kStallLimit) return true;
  }
  return false;
}

bool run_lm(const Objective& obj, const FitConfig& config, const FitStage& stage, int stage_index,
            const Eigen::VectorXd& active, StageState& s, FitResult& result, int& global_iter) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < active.size(); ++i)
    if (active[i] != 0.0) idx.push_back(i);
  const auto na = static_cast<Eigen::Index>(idx.size());
  double damping = config.initial_damping;
  int stalled = 0;

  for (int it = 1; it <= stage.iterations; ++it) {
    ++global_iter;
    const Eigen::MatrixXd h = obj.gauss_newton_hessian(s.x);
    Eigen::MatrixXd ha(na, na);
    Eigen::VectorXd ga(na);
    for (Eigen::Index r = 0; r < na; ++r) {
      ga[r] = s.g[idx[r]];
      for (Eigen::Index c = 0; c < na; ++c) ha(r, c) = h(idx[r], idx[c]);
    }
    const double floor = 1e-9 * std::max(1.0, ha.diagonal().cwiseAbs().maxCoeff());

    bool accepted = false;
    Eigen::VectorXd trial;
    TermBreakdown trial_terms;
    for (int bt = 0; bt <= config.max_backtracks; ++bt) {
      Eigen::MatrixXd damped = ha;
      damped.diagonal().array() += damping * (ha.diagonal().array() + floor);
      const Eigen::VectorXd delta = damped.ldlt().solve(-ga);
      trial = s.x;
      for (Eigen::Index r = 0; r < na; ++r) trial[idx[r]] += delta[r];
      trial_terms = obj.evaluate(trial);
      if (delta.allFinite() && std::isfinite(trial_terms.total) && trial_terms.total <= s.terms.total) {
        accepted = true;
        damping = std::max(damping / 3.0, 1e-12);
        break;
      }
      damping = std::min(damping * 4.0, 1e12);
    }

    if (accepted) {
      const double decrease = s.terms.total - trial_terms.total;
      s.x = trial;
      s.terms = obj.evaluate(s.x, &s.g);
      check_finite(s, stage);
      stalled = stalled_step(decrease, s.terms.total, config.tolerance) ? stalled + 1 : 0;
    } else {
      ++stalled;
    }
    result.trace.push_back({global_iter, stage_index, s.terms, accepted});
    if (stalled >= kStallLimit) return true;
  }
  return false;
}

}  // namespace

FitResult fit(const BodyModelSpec& model, const BodyParams& init, const Camera& init_camera, const DataTerm& data,
              const GmmPrior* prior, const FitConfig& config) {
  const Objective obj(model, init_camera, data, prior, config);
  const int pd = model.pose_dim();
  const int nb = model.shape_count();

  StageState state;
  state.x = obj.pack(init, init_camera.translation);
  state.terms = obj.evaluate(state.x, &state.g);
  if (!std::isfinite(state.terms.total) || !state.g.allFinite()) {
    throw FitError("objective is not finite at the initial parameters");
  }

  FitResult result;
  result.initial = state.terms;

  Eigen::VectorXd group_scale = Eigen::VectorXd::Ones(obj.size());
  if (config.optimizer == Optimizer::Adam) {
    group_scale.segment(pd, nb).setConstant(config.shape_step_scale);
    group_scale.tail<3>().setConstant(config.translation_step_scale);
  }

  int global_iter = 0;
  bool converged = true;
  for (std::size_t si = 0; si < config.stages.size(); ++si) {
    const FitStage& stage = config.stages[si];
    const Eigen::VectorXd active = obj.mask(stage.params).cwiseProduct(group_scale);
    const int index = static_cast<int>(si);
    bool stopped = false;
    switch (config.optimizer) {
      case Optimizer::LevenbergMarquardt:
        stopped = run_lm(obj, config, stage, index, active, state, result, global_iter);
        break;
      case Optimizer::Lbfgs:
        stopped = run_lbfgs(obj, config, stage, index, active, state, result, global_iter);
        break;
      case Optimizer::Adam:
        stopped = run_adam(obj, config, stage, index, active, state, result, global_iter);
        break;
    }
    converged = converged && stopped;
  }

  result.params = obj.unpack_params(state.x);
  result.camera = obj.unpack_camera(state.x);
  result.final_terms = state.terms;
  result.iterations = global_iter;
  result.converged = converged;
  return result;
}

void write_trace_csv(const FitResult& result, std::ostream& out) {
  out << "iteration,stage,accepted,total,data,pose_prior,shape_prior,bending\n";
  out << std::setprecision(17);
  for (const auto& row : result.trace) {
    out << row.iteration << ',' << row.stage << ',' << (row.accepted ? 1 : 0) << ',' << row.terms.total << ','
        << row.terms.data << ',' << row.terms.pose_prior << ',' << row.terms.shape_prior << ','
        << row.terms.bending << '\n';
  }
}

}  // namespace densefit
