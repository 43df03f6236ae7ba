#include "densefit/harness.hpp"

#include "densefit/image.hpp"
#include "densefit/model_io.hpp"
#include "json_arrays.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <thread>

namespace densefit {

using detail::json;

std::vector<ProviderSpec> ExperimentConfig::default_providers() {
  ProviderSpec dense;
  dense.name = "dense_oracle";
  dense.kind = ProviderKind::Oracle;
  ProviderSpec sparse;
  sparse.name = "sparse_gt";
  sparse.kind = ProviderKind::SparseKeypoints;
  return {dense, sparse};
}

void validate(const ExperimentConfig& config) {
  if (config.scene_count < 1) throw InvariantError("scene_count must be >= 1");
  if (config.sigma_pose < 0 || config.sigma_shape < 0 || config.sigma_translation < 0) {
    throw InvariantError("perturbation sigmas must be non-negative");
  }
  if (config.scene.width < 1 || config.scene.height < 1) throw InvariantError("image size must be positive");
  if (config.providers.empty()) throw InvariantError("at least one provider is required");
  for (std::size_t i = 0; i < config.providers.size(); ++i) {
    validate(config.providers[i]);
    for (std::size_t j = 0; j < i; ++j) {
      if (config.providers[i].name == config.providers[j].name) {
        throw InvariantError("duplicate provider name '" + config.providers[i].name + "'");
      }
    }
  }
  if (config.overlay_stride < 1) throw InvariantError("overlay_stride must be >= 1");
  if (config.refit_rounds < 1) throw InvariantError("refit_rounds must be >= 1");
  if (config.prior_components < 1) throw InvariantError("prior components must be >= 1");
  validate(config.fit);
}

namespace {

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ParseError(where + ": expected an object");
  for (const auto& item : obj.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; });
    if (!known) throw ParseError(where + ": unknown key '" + item.key() + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

void read_path(const json& obj, const char* key, std::filesystem::path& out) {
  if (obj.contains(key)) out = obj.at(key).get<std::string>();
}

ParameterSet parse_parameter_set(const json& list) {
  ParameterSet p;
  for (const auto& item : list) {
    const auto name = item.get<std::string>();
    if (name == "root_pose") p.root_pose = true;
    else if (name == "body_pose") p.body_pose = true;
    else if (name == "shape") p.shape = true;
    else if (name == "camera_translation") p.camera_translation = true;
    else if (name == "all") p = ParameterSet::all();
    else throw ParseError("unknown parameter group '" + name + "'");
  }
  return p;
}

void parse_fit(const json& j, FitConfig& fit, bool& hinges_given) {
  check_keys(j,
             {"weights", "scale_mode", "data_factor", "reference_size", "sigma", "robust_mode", "gmm_mode", "stages",
              "optimizer", "lbfgs_memory", "initial_damping", "tolerance", "max_backtracks", "translation_step_scale", "shape_step_scale", "pose_blendshapes",
              "hinge_indices", "hinge_signs"},
             "fit");
  if (j.contains("weights")) {
    const json& w = j.at("weights");
    check_keys(w, {"data", "pose", "shape", "bending"}, "fit.weights");
    read(w, "data", fit.weight_data);
    read(w, "pose", fit.weight_pose);
    read(w, "shape", fit.weight_shape);
    read(w, "bending", fit.weight_bending);
  }
  if (j.contains("scale_mode")) {
    const auto m = j.at("scale_mode").get<std::string>();
    if (m == "fixed") fit.scale_mode = ScaleMode::Fixed;
    else if (m == "person_size") fit.scale_mode = ScaleMode::PersonSize;
    else throw ParseError("unknown scale_mode '" + m + "'");
  }
  if (j.contains("data_factor")) fit.data_factor = j.at("data_factor").get<double>();
  read(j, "reference_size", fit.reference_size);
  read(j, "sigma", fit.sigma);
  if (j.contains("robust_mode")) {
    const auto m = j.at("robust_mode").get<std::string>();
    if (m == "squared_norm") fit.robust_mode = RobustMode::SquaredNorm;
    else if (m == "per_coordinate") fit.robust_mode = RobustMode::PerCoordinate;
    else throw ParseError("unknown robust_mode '" + m + "'");
  }
  if (j.contains("gmm_mode")) {
    const auto m = j.at("gmm_mode").get<std::string>();
    if (m == "min_component") fit.gmm_mode = GmmMode::MinComponent;
    else if (m == "log_sum_exp") fit.gmm_mode = GmmMode::LogSumExp;
    else throw ParseError("unknown gmm_mode '" + m + "'");
  }
  if (j.contains("stages")) {
    fit.stages.clear();
    for (const auto& s : j.at("stages")) {
      check_keys(s, {"name", "params", "iterations", "step_size"}, "fit.stages");
      FitStage stage;
      read(s, "name", stage.name);
      if (s.contains("params")) stage.params = parse_parameter_set(s.at("params"));
      read(s, "iterations", stage.iterations);
      read(s, "step_size", stage.step_size);
      fit.stages.push_back(stage);
    }
  }
  if (j.contains("optimizer")) {
    const auto m = j.at("optimizer").get<std::string>();
    if (m == "levenberg_marquardt") fit.optimizer = Optimizer::LevenbergMarquardt;
    else if (m == "lbfgs") fit.optimizer = Optimizer::Lbfgs;
    else if (m == "adam") fit.optimizer = Optimizer::Adam;
    else throw ParseError("unknown optimizer '" + m + "'");
  }
  read(j, "lbfgs_memory", fit.lbfgs_memory);
  read(j, "initial_damping", fit.initial_damping);
  read(j, "tolerance", fit.tolerance);
  read(j, "max_backtracks", fit.max_backtracks);
  read(j, "translation_step_scale", fit.translation_step_scale);
  read(j, "shape_step_scale", fit.shape_step_scale);
  read(j, "pose_blendshapes", fit.pose_blendshapes);
  hinges_given = j.contains("hinge_indices");
  read(j, "hinge_indices", fit.hinge_indices);
  read(j, "hinge_signs", fit.hinge_signs);
}

ProviderSpec parse_provider(const json& j) {
  check_keys(j, {"name", "kind", "noise_sigma", "correlation_radius", "jitter_sigma", "dropout", "path", "seed"},
             "providers");
  ProviderSpec p;
  if (!j.contains("kind")) throw ParseError("provider needs a 'kind'");
  p.kind = provider_kind_from_string(j.at("kind").get<std::string>());
  p.name = to_string(p.kind);
  read(j, "name", p.name);
  read(j, "noise_sigma", p.noise_sigma);
  read(j, "correlation_radius", p.correlation_radius);
  read(j, "jitter_sigma", p.jitter_sigma);
  read(j, "dropout", p.dropout);
  read_path(j, "path", p.path);
  read(j, "seed", p.seed);
  return p;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  ExperimentConfig c;
  try {
    const json doc = json::parse(json_text);
    check_keys(doc,
               {"scene_count", "master_seed", "perturbation", "scene", "model", "pose_distribution", "prior",
                "providers", "fit", "metrics", "output_dir", "overlays", "overlay_stride", "record_wall_time",
                "refit_rounds"},
               "config");
    read(doc, "scene_count", c.scene_count);
    read(doc, "master_seed", c.master_seed);
    if (doc.contains("perturbation")) {
      const json& p = doc.at("perturbation");
      check_keys(p, {"pose", "shape", "translation"}, "perturbation");
      read(p, "pose", c.sigma_pose);
      read(p, "shape", c.sigma_shape);
      read(p, "translation", c.sigma_translation);
    }
    if (doc.contains("scene")) {
      const json& s = doc.at("scene");
      check_keys(s, {"width", "height", "camera_distance", "root_std", "shape_std", "min_visible_fraction",
                     "max_attempts"},
                 "scene");
      read(s, "width", c.scene.width);
      read(s, "height", c.scene.height);
      read(s, "camera_distance", c.scene.camera_distance);
      read(s, "root_std", c.scene.root_std);
      read(s, "shape_std", c.scene.shape_std);
      read(s, "min_visible_fraction", c.scene.min_visible_fraction);
      read(s, "max_attempts", c.scene.max_attempts);
    }
    if (doc.contains("model")) {
      const json& m = doc.at("model");
      check_keys(m, {"path", "joint_count", "rings", "around", "shape_count", "keypoint_count", "pose_blendshapes"},
                 "model");
      read_path(m, "path", c.model_path);
      read(m, "joint_count", c.synthetic.joint_count);
      read(m, "rings", c.synthetic.rings);
      read(m, "around", c.synthetic.around);
      read(m, "shape_count", c.synthetic.shape_count);
      read(m, "keypoint_count", c.synthetic.keypoint_count);
      read(m, "pose_blendshapes", c.synthetic.pose_blendshapes);
    }
    if (doc.contains("pose_distribution")) {
      const json& p = doc.at("pose_distribution");
      check_keys(p, {"modes", "mode_std", "within_std"}, "pose_distribution");
      read(p, "modes", c.pose_modes);
      read(p, "mode_std", c.pose_mode_std);
      read(p, "within_std", c.pose_within_std);
    }
    if (doc.contains("prior")) {
      const json& p = doc.at("prior");
      check_keys(p, {"path", "components", "samples"}, "prior");
      read_path(p, "path", c.prior_path);
      read(p, "components", c.prior_components);
      read(p, "samples", c.prior_samples);
    }
    if (doc.contains("providers")) {
      for (const auto& p : doc.at("providers")) c.providers.push_back(parse_provider(p));
    } else {
      c.providers = ExperimentConfig::default_providers();
    }
    bool hinges_given = false;
    if (doc.contains("fit")) parse_fit(doc.at("fit"), c.fit, hinges_given);
    if (!hinges_given && c.model_path.empty()) {
      const HingeSet h = synthetic_hinges(c.synthetic.joint_count);
      c.fit.hinge_indices = h.indices;
      c.fit.hinge_signs = h.signs;
    }
    if (doc.contains("metrics")) {
      const json& m = doc.at("metrics");
      check_keys(m, {"root_align"}, "metrics");
      read(m, "root_align", c.metrics.root_align);
    }
    read_path(doc, "output_dir", c.output_dir);
    read(doc, "overlays", c.overlays);
    read(doc, "overlay_stride", c.overlay_stride);
    read(doc, "record_wall_time", c.record_wall_time);
    read(doc, "refit_rounds", c.refit_rounds);
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  validate(c);
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_experiment_config(buffer.str());
}

ExperimentContext build_context(const ExperimentConfig& config) {
  ExperimentContext ctx;
  ctx.model = config.model_path.empty()
                  ? make_synthetic_model(config.synthetic, derive_seed(config.master_seed, seed_stream::kModel, 0))
                  : load_model(config.model_path);
  ctx.poses = make_pose_distribution(ctx.model, config.pose_modes, config.pose_mode_std, config.pose_within_std,
                                     derive_seed(config.master_seed, seed_stream::kPoseModes, 0));
  if (!config.prior_path.empty()) {
    ctx.prior = load_prior(config.prior_path);
  } else {
    const Eigen::MatrixXd samples =
        ctx.poses.sample_many(config.prior_samples, derive_seed(config.master_seed, seed_stream::kPrior, 0));
    ctx.prior = fit_gmm(samples, config.prior_components, derive_seed(config.master_seed, seed_stream::kPrior, 1));
  }
  if (ctx.prior.dim() != ctx.model.pose_dim() - 3) throw DimensionError("pose prior does not match the model");
  return ctx;
}

namespace {

const char* error_code(const std::exception& e) {
  if (dynamic_cast<const FitError*>(&e)) return "fit_failed";
  if (dynamic_cast<const EmptyDomainError*>(&e)) return "empty_domain";
  if (dynamic_cast<const DimensionError*>(&e)) return "dimension";
  if (dynamic_cast<const InvariantError*>(&e)) return "invariant";
  if (dynamic_cast<const ParseError*>(&e)) return "parse";
  if (dynamic_cast<const Error*>(&e)) return "error";
  return "internal";
}

MetricsReport model_space_report(const BodyModelSpec& model, const Points3& pred, const Points3& gt,
                                 const MetricOptions& options) {
  if (!options.root_align) return report(pred, gt, model);
  // Root alignment subtracts each mesh's regressed root joint.
  const Eigen::RowVector3d pr = model.joint_regressor.row(0) * pred;
  const Eigen::RowVector3d gr = model.joint_regressor.row(0) * gt;
  return report(pred.rowwise() - pr, gt.rowwise() - gr, model);
}

std::string safe_name(const std::string& s) {
  std::string out = s;
  for (auto& ch : out) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_') ch = '_';
  }
  return out;
}

}  // namespace

std::vector<ResultRow> run_scene(const ExperimentContext& context, const ExperimentConfig& config, int index) {
  const BodyModelSpec& model = context.model;
  const ForwardOptions options{config.fit.pose_blendshapes};
  std::vector<ResultRow> rows;
  for (const auto& spec : config.providers) {
    ResultRow row;
    row.scene_id = index;
    row.provider = spec.name;
    rows.push_back(row);
  }

  Scene scene;
  Perturbed init;
  RenderBuffers buffers;
  Points3 gt_mesh;
  try {
    scene = make_scene(model, context.poses, config.scene, derive_seed(config.master_seed, seed_stream::kScene,
                                                                       static_cast<std::uint64_t>(index)),
                       index);
    init = perturb_params(scene.gt, scene.camera, config.sigma_pose, config.sigma_shape, config.sigma_translation,
                          derive_seed(config.master_seed, seed_stream::kPerturb, static_cast<std::uint64_t>(index)));
    gt_mesh = forward(model, scene.gt, options);
    const Points3 init_mesh = forward(model, init.params, options);
    VertexAttributes attrs;
    attrs.rgb = scene.texture.colors;
    buffers = rasterize(init_mesh, model.faces, init.camera, scene.width(), scene.height(), attrs);
    const MetricsReport pre = model_space_report(model, init_mesh, gt_mesh, config.metrics);
    for (auto& row : rows) row.pre = pre;
  } catch (const std::exception& e) {
    for (auto& row : rows) row.error_code = error_code(e);
    return rows;
  }

  const bool overlay = index < config.overlays;
  if (overlay) {
    std::filesystem::create_directories(config.output_dir / "images");
    write_ppm(buffers.rgb, config.output_dir / "images" / ("init_" + std::to_string(index) + ".ppm"));
  }

  const std::uint64_t provider_seed =
      derive_seed(config.master_seed, seed_stream::kProvider, static_cast<std::uint64_t>(index));
  std::optional<DisplacementField> oracle;
  const double size_px = person_size(buffers.mask);

  for (std::size_t p = 0; p < config.providers.size(); ++p) {
    const ProviderSpec& spec = config.providers[p];
    ResultRow& row = rows[p];
    const auto start = std::chrono::steady_clock::now();
    try {
      if (spec.is_dense()) {
        BodyParams params = init.params;
        Camera camera = init.camera;
        for (int round = 0; round < config.refit_rounds; ++round) {
          RenderBuffers rebuilt;
          if (round > 0) {
            VertexAttributes attrs;
            attrs.rgb = scene.texture.colors;
            rebuilt = rasterize(forward(model, params, options), model.faces, camera, scene.width(), scene.height(),
                                attrs);
          }
          const RenderBuffers& current = round > 0 ? rebuilt : buffers;
          const DisplacementField field =
              provide_dense(spec, model, scene, params, camera, current, provider_seed, options);
          if (round == 0) {
            if (!oracle) {
              ProviderSpec oracle_spec;
              oracle_spec.kind = ProviderKind::Oracle;
              oracle = provide_dense(oracle_spec, model, scene, init.params, init.camera, buffers, provider_seed,
                                     options);
            }
            if (oracle->valid_pixel_count() > 0) row.epe = epe(field, *oracle);
            if (overlay) {
              write_ppm(render_overlay(buffers, field, config.overlay_stride),
                        config.output_dir / "images" /
                            ("overlay_" + std::to_string(index) + "_" + safe_name(spec.name) + ".ppm"));
            }
          }
          const VertexDisplacements v = pixel_to_vertex(field, current, model.faces, model.vertex_count());
          const VertexTargets targets = target_vertices(v, model, params, camera, options);
          const DataTerm data = DataTerm::dense(
              targets.positions, std::vector<double>(targets.weight.begin(), targets.weight.end()),
              round > 0 ? person_size(current.mask) : size_px);
          const FitResult result = fit(model, params, camera, data, &context.prior, config.fit);
          params = result.params;
          camera = result.camera;
          row.iterations += result.iterations;
        }
        row.post = model_space_report(model, forward(model, params, options), gt_mesh, config.metrics);
      } else {
        const SparseObservation obs = provide_sparse(spec, model, scene, provider_seed, options);
        const DataTerm data = DataTerm::sparse(obs.joints, obs.confidence, size_px);
        const FitResult result = fit(model, init.params, init.camera, data, &context.prior, config.fit);
        row.post = model_space_report(model, forward(model, result.params, options), gt_mesh, config.metrics);
        row.iterations = result.iterations;
      }
    } catch (const std::exception& e) {
      row.error_code = error_code(e);
    }
    if (config.record_wall_time) {
      row.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start)
                        .count();
    }
  }
  return rows;
}

bool ExperimentResult::any_error() const {
  return std::any_of(rows.begin(), rows.end(), [](const ResultRow& r) { return !r.error_code.empty(); });
}

namespace {

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = (v.size() - 1) / 2;
  std::sort(v.begin(), v.end());
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid] + v[mid + 1]);
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

constexpr double MetricsReport::* kMetricFields[] = {&MetricsReport::mpjpe, &MetricsReport::pa_mpjpe,
                                                     &MetricsReport::n_mpjpe, &MetricsReport::pve,
                                                     &MetricsReport::pa_pve, &MetricsReport::n_pve};
constexpr const char* kMetricNames[] = {"mpjpe", "pa_mpjpe", "n_mpjpe", "pve", "pa_pve", "n_pve"};

}  // namespace

std::vector<ProviderSummary> summarize(const std::vector<ResultRow>& rows) {
  std::vector<ProviderSummary> out;
  auto find = [&](const std::string& name) -> ProviderSummary& {
    for (auto& s : out)
      if (s.provider == name) return s;
    out.push_back(ProviderSummary{});
    out.back().provider = name;
    return out.back();
  };
  for (const auto& r : rows) find(r.provider);

  for (auto& s : out) {
    std::vector<std::vector<double>> pre(6), post(6);
    std::vector<double> epes;
    for (const auto& r : rows) {
      if (r.provider != s.provider) continue;
      ++s.scenes;
      if (!r.error_code.empty()) {
        ++s.errors;
        continue;
      }
      for (int m = 0; m < 6; ++m) {
        pre[m].push_back((*r.pre).*kMetricFields[m]);
        post[m].push_back((*r.post).*kMetricFields[m]);
      }
      if (r.epe) epes.push_back(*r.epe);
    }
    for (int m = 0; m < 6; ++m) {
      s.median_pre.*kMetricFields[m] = median_of(pre[m]);
      s.median_post.*kMetricFields[m] = median_of(post[m]);
      s.mean_post.*kMetricFields[m] = mean_of(post[m]);
    }
    if (!epes.empty()) s.median_epe = median_of(epes);
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config, int jobs, bool write_outputs) {
  validate(config);
  const ExperimentContext context = build_context(config);
  return run_experiment(context, config, jobs, write_outputs);
}

ExperimentResult run_experiment(const ExperimentContext& context, const ExperimentConfig& config, int jobs,
                                bool write_outputs) {
  validate(config);
  ExperimentConfig local = config;
  if (!write_outputs) local.overlays = 0;
  if (write_outputs) std::filesystem::create_directories(local.output_dir);

  std::vector<std::vector<ResultRow>> per_scene(static_cast<std::size_t>(local.scene_count));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < local.scene_count; i = next++) {
      per_scene[static_cast<std::size_t>(i)] = run_scene(context, local, i);
    }
  };
  const int threads = std::clamp(jobs, 1, local.scene_count);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  ExperimentResult result;
  for (auto& rows : per_scene)
    for (auto& r : rows) result.rows.push_back(std::move(r));
  result.summary = summarize(result.rows);

  if (write_outputs) {
    std::ofstream csv(local.output_dir / "results.csv", std::ios::binary);
    if (!csv) throw Error("cannot write " + (local.output_dir / "results.csv").string());
    write_results_csv(result.rows, csv);
    std::ofstream summary(local.output_dir / "summary.json", std::ios::binary);
    write_summary_json(result.summary, summary);
  }
  return result;
}

namespace {

std::string fmt(double v) {
  if (!std::isfinite(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void write_results_csv(const std::vector<ResultRow>& rows, std::ostream& out) {
  out << "scene_id,provider";
  for (const char* phase : {"pre", "post"})
    for (const char* name : kMetricNames) out << ',' << phase << '_' << name;
  out << ",epe,iterations,wall_ms,error_code\n";
  for (const auto& r : rows) {
    out << r.scene_id << ',' << r.provider;
    for (const auto* rep : {&r.pre, &r.post})
      for (auto field : kMetricFields) out << ',' << (*rep ? fmt((**rep).*field) : "");
    out << ',' << (r.epe ? fmt(*r.epe) : "") << ',' << r.iterations << ',' << r.wall_ms << ',' << r.error_code
        << '\n';
  }
}

std::vector<ResultRow> read_results_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("results CSV is empty");
  const auto header = split_csv_line(line);
  if (header.size() != 18 || header[0] != "scene_id") throw ParseError("results CSV has an unexpected header");
  std::vector<ResultRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 18) throw ParseError("results CSV line " + std::to_string(line_no) + ": expected 18 cells");
    try {
      ResultRow r;
      r.scene_id = std::stoi(cells[0]);
      r.provider = cells[1];
      auto parse_report = [&](std::size_t first) -> std::optional<MetricsReport> {
        if (cells[first].empty()) return std::nullopt;
        MetricsReport m;
        for (std::size_t k = 0; k < 6; ++k) m.*kMetricFields[k] = std::stod(cells[first + k]);
        return m;
      };
      r.pre = parse_report(2);
      r.post = parse_report(8);
      if (!cells[14].empty()) r.epe = std::stod(cells[14]);
      r.iterations = std::stoi(cells[15]);
      r.wall_ms = std::stoll(cells[16]);
      r.error_code = cells[17];
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw ParseError("results CSV line " + std::to_string(line_no) + ": bad number");
    }
  }
  return rows;
}

void write_summary_json(const std::vector<ProviderSummary>& summary, std::ostream& out) {
  json doc = json::array();
  for (const auto& s : summary) {
    json j;
    j["provider"] = s.provider;
    j["scenes"] = s.scenes;
    j["errors"] = s.errors;
    for (int m = 0; m < 6; ++m) {
      j["median_pre"][kMetricNames[m]] = fmt(s.median_pre.*kMetricFields[m]);
      j["median_post"][kMetricNames[m]] = fmt(s.median_post.*kMetricFields[m]);
      j["mean_post"][kMetricNames[m]] = fmt(s.mean_post.*kMetricFields[m]);
    }
    j["median_epe"] = s.median_epe ? fmt(*s.median_epe) : "";
    doc.push_back(j);
  }
  out << doc.dump(2) << '\n';
}

void print_summary(const std::vector<ProviderSummary>& summary, std::ostream& out) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-20s %6s %6s %10s %10s %10s %10s %10s %10s %8s\n", "provider", "scenes", "errors",
                "pre_pve", "post_pve", "post_mpjpe", "post_pa", "post_n", "post/pre", "epe");
  out << buf;
  for (const auto& s : summary) {
    std::snprintf(buf, sizeof buf, "%-20s %6d %6d %10.2f %10.2f %10.2f %10.2f %10.2f %10.3f %8s\n",
                  s.provider.c_str(), s.scenes, s.errors, s.median_pre.pve, s.median_post.pve, s.median_post.mpjpe,
                  s.median_post.pa_mpjpe, s.median_post.n_mpjpe, s.median_post.pve / s.median_pre.pve,
                  s.median_epe ? fmt(*s.median_epe).c_str() : "-");
    out << buf;
  }
}

std::vector<ProviderSpec> noise_ablation_providers(const std::vector<double>& sigmas) {
  std::vector<ProviderSpec> out;
  for (double s : sigmas) {
    ProviderSpec p;
    p.kind = ProviderKind::NoisyOracle;
    p.noise_sigma = s;
    char buf[32];
    std::snprintf(buf, sizeof buf, "noise_%g", s);
    p.name = buf;
    out.push_back(p);
  }
  return out;
}

std::vector<TextureAblationRow> run_texture_ablation(const ExperimentContext& context,
                                                     const ExperimentConfig& config, int frames) {
  if (frames < 1) throw InvariantError("texture ablation needs at least one frame");
  const BodyModelSpec& model = context.model;
  const ForwardOptions options{config.fit.pose_blendshapes};
  std::vector<TextureAblationRow> rows;

  auto scene_for = [&](int i) {
    return make_scene(model, context.poses, config.scene,
                      derive_seed(config.master_seed, seed_stream::kScene, static_cast<std::uint64_t>(i)), i);
  };

  for (int i = 0; i < config.scene_count; ++i) {
    const Scene scene = scene_for(i);
    const Scene next = scene_for((i + 1) % config.scene_count);
    std::mt19937_64 rng(derive_seed(config.master_seed, seed_stream::kTexture, static_cast<std::uint64_t>(i)));

    std::vector<TextureFrame> sequence;
    for (int f = 0; f < frames; ++f) {
      BodyParams params = scene.gt;
      if (f > 0) {
        params.pose.tail(model.pose_dim() - 3) = context.poses.sample(rng);
        params.pose[1] += 2.0 * std::numbers::pi * f / frames;  // turn the subject around its vertical axis
      }
      VertexAttributes attrs;
      attrs.rgb = scene.texture.colors;
      const RenderBuffers b =
          rasterize(forward(model, params, options), model.faces, scene.camera, scene.width(), scene.height(), attrs);
      sequence.push_back({b.rgb, params, scene.camera});
    }
    const VertexTexture rebuilt = median_texture(backproject(sequence, model, options));
    int covered = 0;
    for (auto c : rebuilt.coverage) covered += c;
    const std::uint64_t pseed = rng();

    const Points3 gt_mesh = forward(model, scene.gt, options);
    VertexAttributes ref_attrs;
    ref_attrs.rgb = scene.texture.colors;
    const RenderBuffers reference =
        rasterize(gt_mesh, model.faces, scene.camera, scene.width(), scene.height(), ref_attrs);

    const std::vector<std::pair<std::string, VertexTexture>> variants = {
        {"reconstructed", rebuilt},
        {"noise_10", perturb_texture(rebuilt, TexturePerturbation::Noise, 10.0, pseed)},
        {"brightness_25", perturb_texture(rebuilt, TexturePerturbation::Brightness, 25.0, pseed)},
        {"swap", perturb_texture(rebuilt, TexturePerturbation::Swap, 0.0, pseed, &next.texture)},
    };
    for (const auto& [name, tex] : variants) {
      TextureAblationRow row;
      row.scene_id = i;
      row.perturbation = name;
      row.coverage = static_cast<double>(covered) / model.vertex_count();
      double err = 0.0;
      int count = 0;
      for (int v = 0; v < model.vertex_count(); ++v) {
        if (!rebuilt.coverage[v]) continue;
        err += (tex.colors.row(v) - scene.texture.colors.row(v)).cwiseAbs().sum();
        count += 3;
      }
      row.texture_error = count ? 255.0 * err / count : 0.0;
      VertexAttributes attrs;
      attrs.rgb = tex.colors;
      const RenderBuffers rendered =
          rasterize(gt_mesh, model.faces, scene.camera, scene.width(), scene.height(), attrs);
      double photo = 0.0;
      int pixels = 0;
      for (std::size_t p = 0; p < reference.mask.size(); ++p) {
        if (!reference.mask[p]) continue;
        photo += (rendered.rgb[p] - reference.rgb[p]).cwiseAbs().sum();
        pixels += 3;
      }
      row.photometric_error = pixels ? 255.0 * photo / pixels : 0.0;
      rows.push_back(row);
    }
  }
  return rows;
}

void write_texture_csv(const std::vector<TextureAblationRow>& rows, std::ostream& out) {
  out << "scene_id,perturbation,texture_error,photometric_error,coverage\n";
  for (const auto& r : rows) {
    out << r.scene_id << ',' << r.perturbation << ',' << fmt(r.texture_error) << ',' << fmt(r.photometric_error)
        << ',' << fmt(r.coverage) << '\n';
  }
}

namespace {

void draw_line(RgbImage& image, int x0, int y0, int x1, int y1, const Vec3& color) {
  const int dx = std::abs(x1 - x0);
  const int sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0);
  const int sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    if (x0 >= 0 && y0 >= 0 && x0 < image.width() && y0 < image.height()) image(x0, y0) = color;
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

}  // namespace

RgbImage render_overlay(const RenderBuffers& buffers, const DisplacementField& field, int stride,
                        const Vec3& arrow_color) {
  if (stride < 1) throw InvariantError("overlay stride must be >= 1");
  if (!field.mask.same_shape(buffers.mask)) throw DimensionError("overlay field and buffers differ in size");
  const int w = buffers.width();
  const int h = buffers.height();
  RgbImage image(w, h, Vec3::Zero());
  for (std::size_t p = 0; p < buffers.mask.size(); ++p) {
    if (buffers.mask[p]) image[p] = buffers.rgb[p];
  }
  for (int y = 0; y < h; y += stride) {
    for (int x = 0; x < w; x += stride) {
      if (!field.mask(x, y)) continue;
      const Vec2& d = field.f(x, y);
      const int x1 = static_cast<int>(std::lround(x + d.x()));
      const int y1 = static_cast<int>(std::lround(y + d.y()));
      if (x1 == x && y1 == y) continue;
      draw_line(image, x, y, x1, y1, arrow_color);
    }
  }
  return image;
}

}  // namespace densefit
