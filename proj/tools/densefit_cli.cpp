// densefit: synthetic experiments for dense displacement-driven body model fitting.

#include "densefit/harness.hpp"
#include "densefit/image.hpp"
#include "densefit/model_io.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

namespace {

using namespace densefit;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  int jobs = 1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "Experiment config (JSON)");
  cmd->add_option("--seed", c.seed, "Master seed (overrides the config)");
  cmd->add_option("--out", c.out, "Output directory (overrides the config)");
  cmd->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber);
}

ExperimentConfig load(const Common& c) {
  ExperimentConfig config = c.config_path.empty() ? parse_experiment_config("{}") : load_experiment_config(c.config_path);
  if (c.seed) config.master_seed = *c.seed;
  if (!c.out.empty()) config.output_dir = c.out;
  return config;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

int cmd_gen_model(const Common& c) {
  const ExperimentConfig config = load(c);
  const ExperimentContext ctx = build_context(config);
  std::filesystem::create_directories(config.output_dir);
  save_model(ctx.model, config.output_dir / "model.json");
  save_prior(ctx.prior, config.output_dir / "prior.json");
  std::cout << "wrote " << (config.output_dir / "model.json").string() << " (" << ctx.model.vertex_count()
            << " vertices, " << ctx.model.joint_count() << " joints) and prior.json (" << ctx.prior.components()
            << " components)\n";
  return 0;
}

int cmd_gen_scenes(const Common& c) {
  const ExperimentConfig config = load(c);
  const ExperimentContext ctx = build_context(config);
  const auto dir = config.output_dir / "scenes";
  std::filesystem::create_directories(dir);
  std::vector<Scene> scenes;
  for (int i = 0; i < config.scene_count; ++i) {
    Scene s = make_scene(ctx.model, ctx.poses, config.scene,
                         derive_seed(config.master_seed, seed_stream::kScene, static_cast<std::uint64_t>(i)), i);
    VertexAttributes attrs;
    attrs.rgb = s.texture.colors;
    const RenderBuffers b = rasterize(forward(ctx.model, s.gt), ctx.model.faces, s.camera, s.width(), s.height(), attrs);
    const std::string stem = "scene_" + std::to_string(i);
    write_ppm(b.rgb, dir / (stem + "_rgb.ppm"));
    write_pgm16(depth_to_u16(b.depth, b.mask), dir / (stem + "_depth.pgm"));
    write_pgm16(mask_to_u16(b.mask), dir / (stem + "_mask.pgm"));
    scenes.push_back(std::move(s));
  }
  save_scenes(scenes, config.output_dir / "scenes.json");
  std::cout << "wrote " << scenes.size() << " scenes to " << config.output_dir.string() << '\n';
  return 0;
}

int run_and_report(const ExperimentConfig& config, int jobs) {
  const ExperimentResult result = run_experiment(config, jobs, true);
  print_summary(result.summary, std::cout);
  std::cout << "results: " << (config.output_dir / "results.csv").string() << '\n';
  return result.any_error() ? 1 : 0;
}

int cmd_fit(const Common& c) { return run_and_report(load(c), c.jobs); }

int cmd_ablate_noise(const Common& c, const std::vector<double>& sigmas) {
  ExperimentConfig config = load(c);
  config.providers = noise_ablation_providers(sigmas);
  return run_and_report(config, c.jobs);
}

int cmd_ablate_texture(const Common& c, int frames) {
  const ExperimentConfig config = load(c);
  const ExperimentContext ctx = build_context(config);
  const auto rows = run_texture_ablation(ctx, config, frames);
  std::filesystem::create_directories(config.output_dir);
  auto out = open_out(config.output_dir / "texture_ablation.csv");
  write_texture_csv(rows, out);
  std::cout << "wrote " << rows.size() << " rows to " << (config.output_dir / "texture_ablation.csv").string()
            << '\n';
  return 0;
}

int cmd_report(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw ParseError("cannot open " + csv_path);
  const auto rows = read_results_csv(in);
  print_summary(summarize(rows), std::cout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"densefit: dense 2D displacement body-model fitting experiments"};
  app.require_subcommand(1);

  Common common;
  auto* gen_model = app.add_subcommand("gen-model", "Write the synthetic body model and fitted pose prior");
  add_common(gen_model, common);
  auto* gen_scenes = app.add_subcommand("gen-scenes", "Write ground-truth scenes and renderings");
  add_common(gen_scenes, common);
  auto* fit_cmd = app.add_subcommand("fit", "Run the perturb / provide / fit / evaluate experiment");
  add_common(fit_cmd, common);
  auto* noise_cmd = app.add_subcommand("ablate-noise", "Sweep noisy-oracle providers over noise levels");
  add_common(noise_cmd, common);
  std::vector<double> sigmas{0.0, 2.0, 5.0, 10.0};
  noise_cmd->add_option("--sigmas", sigmas, "Noise standard deviations in pixels");
  auto* texture_cmd = app.add_subcommand("ablate-texture", "Texture reconstruction and perturbation errors");
  add_common(texture_cmd, common);
  int frames = 4;
  texture_cmd->add_option("--frames", frames, "Frames per subject")->check(CLI::PositiveNumber);
  auto* report_cmd = app.add_subcommand("report", "Summarize a results CSV");
  std::string csv_path;
  report_cmd->add_option("csv", csv_path, "results.csv")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_model) return cmd_gen_model(common);
    if (*gen_scenes) return cmd_gen_scenes(common);
    if (*fit_cmd) return cmd_fit(common);
    if (*noise_cmd) return cmd_ablate_noise(common, sigmas);
    if (*texture_cmd) return cmd_ablate_texture(common, frames);
    if (*report_cmd) return cmd_report(csv_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
