// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   densefit_acceptance --cli <path to densefit> --work <scratch dir>

#include "densefit/harness.hpp"
#include "densefit/rotation.hpp"
#include "raster_oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <thread>

using namespace densefit;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Outcome rasterizer_oracle() {
  const auto start = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> count(1, 50);
  int mismatches = 0;
  double worst_bary = 0.0, worst_depth = 0.0;
  long long covered = 0;
  for (int mesh = 0; mesh < 100; ++mesh) {
    const test::RandomSoup s = test::random_soup(rng, count(rng));
    const RenderBuffers b = rasterize(s.mesh, s.faces, s.camera, 64, 64);
    const test::OracleBuffers o = test::oracle_rasterize(s.mesh, s.faces, s.camera, 64, 64);
    for (std::size_t p = 0; p < b.mask.size(); ++p) {
      const bool oracle_hit = o.index[p] >= 0;
      if (b.index_map[p] != o.index[p] || (b.mask[p] != 0) != oracle_hit) {
        ++mismatches;
        continue;
      }
      if (!oracle_hit) continue;
      ++covered;
      worst_bary = std::max(worst_bary, (b.bary[p] - o.bary[p]).cwiseAbs().maxCoeff());
      worst_depth = std::max(worst_depth, std::abs(b.depth[p] - o.depth[p]));
    }
  }
  const double t = seconds_since(start);
  const bool pass = mismatches == 0 && worst_bary <= 1e-9 && worst_depth <= 1e-9 && t < 10.0;
  return {pass, fmt("100 meshes, %lld covered pixels, %d index/mask mismatches, max bary err %.2e, max depth err "
                    "%.2e, %.2f s (limit 10 s)",
                    covered, mismatches, worst_bary, worst_depth, t)};
}

Outcome gradient_check() {
  const auto start = Clock::now();
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  double worst = 0.0;
  for (int config = 0; config < 20; ++config) {
    SyntheticModelConfig mc;
    mc.joint_count = 4 + static_cast<int>(u(rng) * 21);
    mc.rings = 3;
    mc.around = 6;
    mc.shape_count = 1 + static_cast<int>(u(rng) * 10);
    mc.keypoint_count = 25;
    mc.pose_blendshapes = config % 5 == 4;
    const BodyModelSpec model = make_synthetic_model(mc, 1000 + config);
    const ForwardOptions opt{mc.pose_blendshapes};

    BodyParams gt = BodyParams::zeros(model);
    for (Eigen::Index i = 0; i < gt.pose.size(); ++i) gt.pose[i] = 0.3 * n(rng);
    for (Eigen::Index i = 0; i < gt.shape.size(); ++i) gt.shape[i] = n(rng);
    const Camera camera = Camera::with_default_intrinsics(
        128, 128, Vec3(1, -1, -1).asDiagonal().toDenseMatrix(), Vec3(0.1 * n(rng), 0.1 * n(rng), 3.0));
    const Points3 mesh = forward(model, gt, opt);
    const Projection proj = project(camera, mesh);

    const int d = model.pose_dim() - 3;
    Eigen::MatrixXd means(3, d);
    for (Eigen::Index i = 0; i < means.size(); ++i) means.data()[i] = 0.3 * n(rng);
    std::vector<Eigen::MatrixXd> covs;
    for (int k = 0; k < 3; ++k) covs.push_back((0.02 + 0.05 * u(rng)) * Eigen::MatrixXd::Identity(d, d));
    const GmmPrior prior(means, covs, Eigen::Vector3d(0.5, 0.3, 0.2));

    FitConfig fc;
    fc.weight_data = 0.5 + u(rng);
    fc.weight_pose = 5.0 * u(rng);
    fc.weight_shape = 5.0 * u(rng);
    fc.weight_bending = u(rng);
    const HingeSet hinges = synthetic_hinges(mc.joint_count);
    fc.hinge_indices = hinges.indices;
    fc.hinge_signs = hinges.signs;
    fc.sigma = 20.0 + 180.0 * u(rng);
    fc.scale_mode = config % 2 ? ScaleMode::Fixed : ScaleMode::PersonSize;
    fc.gmm_mode = config % 3 == 0 ? GmmMode::LogSumExp : GmmMode::MinComponent;
    fc.robust_mode = config % 4 == 1 ? RobustMode::PerCoordinate : RobustMode::SquaredNorm;
    fc.pose_blendshapes = mc.pose_blendshapes;

    DataTerm data;
    if (config % 2 == 0) {
      std::vector<double> w(static_cast<std::size_t>(model.vertex_count()));
      for (auto& x : w) x = u(rng) < 0.6 ? 1.0 : 0.0;
      w[0] = 1.0;
      data = DataTerm::dense(proj.pixels, w, 60.0 + 100.0 * u(rng));
    } else {
      Eigen::VectorXd conf(model.keypoint_count());
      for (Eigen::Index i = 0; i < conf.size(); ++i) conf[i] = u(rng);
      data = DataTerm::sparse(project(camera, regress_keypoints(model, mesh)).pixels, conf, 60.0 + 100.0 * u(rng));
    }
    const Objective obj(model, camera, data, &prior, fc);
    BodyParams at = gt;
    for (Eigen::Index i = 0; i < at.pose.size(); ++i) at.pose[i] += 0.1 * n(rng);
    for (Eigen::Index i = 0; i < at.shape.size(); ++i) at.shape[i] += 0.3 * n(rng);
    const Eigen::VectorXd x = obj.pack(at, camera.translation + Vec3(0.02 * n(rng), 0.02 * n(rng), 0.05 * n(rng)));

    Eigen::VectorXd analytic;
    obj.evaluate(x, &analytic);
    Eigen::VectorXd fd(x.size());
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Eigen::VectorXd hi = x, lo = x;
      hi[i] += h;
      lo[i] -= h;
      fd[i] = (obj.evaluate(hi).total - obj.evaluate(lo).total) / (2 * h);
    }
    worst = std::max(worst, (analytic - fd).norm() / fd.norm());
  }
  const double t = seconds_since(start);
  return {worst < 1e-4 && t < 5.0,
          fmt("20 configurations, max relative error %.2e (limit 1e-4), %.2f s (limit 5 s)", worst, t)};
}

Outcome displacement_algebra() {
  ExperimentConfig config = parse_experiment_config("{}");
  const ExperimentContext ctx = build_context(config);
  const BodyModelSpec& model = ctx.model;
  const int n = model.vertex_count();
  const Scene scene = make_scene(model, ctx.poses, config.scene, derive_seed(1, seed_stream::kScene, 0), 0);
  const Perturbed init = perturb_params(scene.gt, scene.camera, 0.15, 0.5, 0.05, 99);

  // Constant-field round trip and ground-truth cancellation at the scene resolution.
  const RenderBuffers b = rasterize(forward(model, init.params), model.faces, init.camera, 256, 256);
  const VertexVisibility vis = vertex_visibility(b, model.faces, n);
  VertexDisplacements constant;
  constant.v = Points2::Zero(n, 2);
  constant.visible = vis.visible;
  for (int i = 0; i < n; ++i)
    if (vis.visible[i]) constant.v.row(i) << 4.25, -7.5;
  const VertexDisplacements back = pixel_to_vertex(vertex_to_pixel(constant, b, model.faces), b, model.faces, n);
  double constant_err = 0.0;
  for (int i = 0; i < n; ++i)
    if (vis.visible[i]) constant_err = std::max(constant_err, (back.v.row(i) - constant.v.row(i)).norm());

  const VertexDisplacements gt_v = gt_vertex_displacements(model, scene.gt, scene.camera, init.params, init.camera, vis);
  const VertexTargets targets = target_vertices(gt_v, model, init.params, init.camera);
  const Projection gt_proj = project(scene.camera, forward(model, scene.gt));
  double cancel_err = 0.0;
  for (int i = 0; i < n; ++i)
    if (targets.weight[i]) cancel_err = std::max(cancel_err, (targets.positions.row(i) - gt_proj.pixels.row(i)).norm());

  // Smooth random field (pixels at 256²; scaled with resolution) through vertex→pixel→vertex.
  const Points3 rest = forward(model, BodyParams::zeros(model));
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  Points2 field(n, 2);
  field.setZero();
  for (int k = 0; k < 4; ++k) {
    const Vec3 freq(2.0 * g(rng), 2.0 * g(rng), 2.0 * g(rng));
    const double phase = g(rng);
    const Vec2 amp(3.0 * g(rng), 3.0 * g(rng));
    for (int i = 0; i < n; ++i) field.row(i) += (amp * std::sin(freq.dot(rest.row(i).transpose()) + phase)).transpose();
  }
  const std::vector<int> sizes{64, 128, 256};
  std::vector<VertexDisplacements> results;
  std::vector<std::uint8_t> common(static_cast<std::size_t>(n), 1);
  for (int size : sizes) {
    const double scale = size / 256.0;
    const Camera cam = Camera::with_default_intrinsics(size, size, init.camera.rotation, init.camera.translation);
    const RenderBuffers rb = rasterize(forward(model, init.params), model.faces, cam, size, size);
    const VertexVisibility rv = vertex_visibility(rb, model.faces, n);
    VertexDisplacements v;
    v.v = scale * field;
    v.visible = rv.visible;
    results.push_back(pixel_to_vertex(vertex_to_pixel(v, rb, model.faces), rb, model.faces, n));
    for (int i = 0; i < n; ++i) common[i] &= rv.visible[i];
  }
  std::vector<double> rms;
  int common_count = 0;
  for (std::size_t r = 0; r < sizes.size(); ++r) {
    const double scale = sizes[r] / 256.0;
    double sq = 0.0;
    common_count = 0;
    for (int i = 0; i < n; ++i) {
      if (!common[i]) continue;
      // Compare in 256-pixel units so the resolutions share a scale.
      sq += ((results[r].v.row(i) - scale * field.row(i)) / scale).squaredNorm();
      ++common_count;
    }
    rms.push_back(std::sqrt(sq / std::max(1, common_count)));
  }
  const bool pass = constant_err <= 1e-9 && cancel_err <= 1e-9 && common_count > 0 && rms[1] < rms[0] && rms[2] < rms[1];
  return {pass, fmt("constant round trip %.2e, cancellation %.2e, smooth-field RMS %.4f > %.4f > %.4f px over %d "
                    "vertices",
                    constant_err, cancel_err, rms[0], rms[1], rms[2], common_count)};
}

struct SuiteResult {
  std::vector<ResultRow> rows;
  double seconds = 0.0;
};

SuiteResult run_suite(const ExperimentConfig& config, int jobs) {
  const auto start = Clock::now();
  ExperimentResult r = run_experiment(config, jobs, false);
  return {std::move(r.rows), seconds_since(start)};
}

std::vector<double> post_pve(const std::vector<ResultRow>& rows, const std::string& provider, int* errors) {
  std::vector<double> out;
  for (const auto& r : rows) {
    if (r.provider != provider) continue;
    if (!r.error_code.empty() || !r.post) {
      ++*errors;
      continue;
    }
    out.push_back(r.post->pve);
  }
  return out;
}

Outcome recovery(const SuiteResult& suite) {
  int errors = 0;
  std::vector<double> pre, post;
  for (const auto& r : suite.rows) {
    if (r.provider != "dense_oracle") continue;
    if (!r.error_code.empty() || !r.post) {
      ++errors;
      continue;
    }
    pre.push_back(r.pre->pve);
    post.push_back(r.post->pve);
  }
  const double mpre = median(pre), mpost = median(post);
  const bool pass = errors == 0 && post.size() == 100 && mpost <= 0.3 * mpre && suite.seconds < 120.0;
  return {pass, fmt("100 scenes, median PVE %.2f -> %.2f mm (ratio %.3f, limit 0.30), %d errors, %.1f s "
                    "single-threaded for dense+sparse (limit 120 s)",
                    mpre, mpost, mpost / mpre, errors, suite.seconds)};
}

Outcome dense_vs_sparse(const SuiteResult& suite) {
  int errors = 0;
  const double dense = median(post_pve(suite.rows, "dense_oracle", &errors));
  const double sparse = median(post_pve(suite.rows, "sparse_gt", &errors));
  return {errors == 0 && dense <= 0.85 * sparse,
          fmt("median post-fit PVE dense %.2f mm vs sparse %.2f mm (ratio %.3f, limit 0.85)", dense, sparse,
              dense / sparse)};
}

Outcome noise_behavior(int jobs) {
  // EPE: noisy oracle vs oracle, pooled over scenes until at least 10^4 valid pixels.
  ExperimentConfig config = parse_experiment_config("{}");
  const ExperimentContext ctx = build_context(config);
  std::string epe_detail;
  bool epe_ok = true;
  for (double sigma : {2.0, 5.0, 10.0}) {
    double sum = 0.0;
    long long pixels = 0;
    for (int i = 0; pixels < 10000; ++i) {
      const Scene scene = make_scene(ctx.model, ctx.poses, config.scene, derive_seed(1, seed_stream::kScene, i), i);
      const Perturbed init = perturb_params(scene.gt, scene.camera, config.sigma_pose, config.sigma_shape,
                                            config.sigma_translation, derive_seed(1, seed_stream::kPerturb, i));
      const RenderBuffers b =
          rasterize(forward(ctx.model, init.params), ctx.model.faces, init.camera, scene.width(), scene.height());
      ProviderSpec oracle_spec;
      ProviderSpec noisy;
      noisy.kind = ProviderKind::NoisyOracle;
      noisy.noise_sigma = sigma;
      const std::uint64_t seed = derive_seed(1, seed_stream::kProvider, i);
      const DisplacementField o = provide_dense(oracle_spec, ctx.model, scene, init.params, init.camera, b, seed);
      const DisplacementField f = provide_dense(noisy, ctx.model, scene, init.params, init.camera, b, seed);
      const int valid = o.valid_pixel_count();
      sum += epe(f, o) * valid;
      pixels += valid;
    }
    const double measured = sum / static_cast<double>(pixels);
    const double expected = sigma * std::sqrt(std::numbers::pi / 2);
    const double rel = std::abs(measured - expected) / expected;
    epe_ok = epe_ok && rel <= 0.05;
    epe_detail += fmt("σ=%g: EPE %.3f vs %.3f (%.1f%%, %lld px); ", sigma, measured, expected, 100 * rel, pixels);
  }

  config.providers = noise_ablation_providers({0.0, 2.0, 5.0, 10.0});
  const SuiteResult suite = run_suite(config, jobs);
  int errors = 0;
  std::vector<double> medians;
  for (const auto& p : config.providers) medians.push_back(median(post_pve(suite.rows, p.name, &errors)));
  bool monotone = errors == 0;
  for (std::size_t i = 1; i < medians.size(); ++i) monotone = monotone && medians[i] >= medians[i - 1];
  return {epe_ok && monotone,
          epe_detail + fmt("median post-fit PVE over σ {0,2,5,10}: %.2f, %.2f, %.2f, %.2f mm", medians[0], medians[1],
                           medians[2], medians[3])};
}

Outcome metric_invariances() {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  auto random_points = [&](int count) {
    Points3 p(count, 3);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = 0.3 * n(rng);
    return p;
  };
  double worst_pa = 0.0, worst_n = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Points3 g = random_points(24);
    const Mat3 r = rodrigues(Vec3(n(rng), n(rng), n(rng)));
    const Points3 moved = ((scale(rng) * g * r.transpose()).rowwise() + Eigen::RowVector3d(n(rng), n(rng), n(rng))).eval();
    worst_pa = std::max(worst_pa, pa_mpjpe(moved, g));
    worst_n = std::max(worst_n, n_mpjpe(scale(rng) * g, g));
  }
  int order_violations = 0, squared_violations = 0;
  for (int t = 0; t < 200; ++t) {
    Points3 g = random_points(24);
    Points3 p = random_points(24) + g;
    g = g.rowwise() - g.colwise().mean();
    p = p.rowwise() - p.colwise().mean();
    const double pa = pa_mpjpe(p, g), nn = n_mpjpe(p, g), plain = mpjpe(p, g);
    if (!(pa <= nn + 1e-12 && nn <= plain + 1e-12)) ++order_violations;
    // Same ordering in summed squared error, which both least-squares alignments minimize.
    const double s = (p.array() * g.array()).sum() / p.squaredNorm();
    const double pa2 = (pa_align(p, g).apply(p) - g).squaredNorm(), n2 = (s * p - g).squaredNorm(),
                 plain2 = (p - g).squaredNorm();
    if (!(pa2 <= n2 * (1 + 1e-12) && n2 <= plain2 * (1 + 1e-12))) ++squared_violations;
  }
  return {worst_pa <= 1e-8 && worst_n <= 1e-8 && order_violations == 0,
          fmt("max PA-MPJPE under 50 similarities %.2e mm, max N-MPJPE under scalings %.2e mm, PA <= N <= plain "
              "violated by %d of 200 centered instances (in summed squared error: %d)",
              worst_pa, worst_n, order_violations, squared_violations)};
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism(const std::string& cli, const std::filesystem::path& work) {
  if (cli.empty()) return {false, "no --cli path given"};
  std::filesystem::remove_all(work);
  std::filesystem::create_directories(work);
  std::ofstream(work / "config.json") << R"({"scene_count": 12, "master_seed": 5})";
  std::string csv[2];
  for (int run = 0; run < 2; ++run) {
    const auto out = work / ("run" + std::to_string(run));
    const std::string cmd = "\"" + cli + "\" fit --config \"" + (work / "config.json").string() + "\" --out \"" +
                            out.string() + "\" --jobs " + (run == 0 ? "1" : "4") + " > /dev/null";
    const int rc = std::system(cmd.c_str());
    if (rc != 0) return {false, fmt("fit run %d exited with status %d", run, rc)};
    csv[run] = read_file(out / "results.csv");
  }
  const bool same = !csv[0].empty() && csv[0] == csv[1];
  return {same, fmt("two `fit` runs (1 and 4 worker threads), results.csv %zu bytes, %s", csv[0].size(),
                    same ? "byte-identical" : "DIFFERENT")};
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli;
  std::filesystem::path work = std::filesystem::temp_directory_path() / "densefit_acceptance";
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string key = argv[i];
    if (key == "--cli") cli = argv[i + 1];
    else if (key == "--work") work = argv[i + 1];
  }
  const int jobs = std::max(1u, std::thread::hardware_concurrency());

  int failures = 0;
  auto report = [&](const char* name, const Outcome& o) {
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    if (!o.pass) ++failures;
  };

  report("rasterizer_oracle", rasterizer_oracle());
  report("gradient_correctness", gradient_check());
  report("displacement_algebra", displacement_algebra());
  {
    ExperimentConfig config = parse_experiment_config("{}");
    const SuiteResult suite = run_suite(config, 1);
    report("recovery", recovery(suite));
    report("dense_vs_sparse", dense_vs_sparse(suite));
  }
  report("noise_behavior", noise_behavior(jobs));
  report("metric_invariances", metric_invariances());
  report("determinism", determinism(cli, work));

  std::cout << (failures == 0 ? "all acceptance criteria passed" : fmt("%d acceptance criteria failed", failures))
            << std::endl;
  return failures == 0 ? 0 : 1;
}
