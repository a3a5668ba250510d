// fewview: few-shot novel view synthesis via three-stage distillation.
//
// Subcommands:
//   synth   generate an analytic dataset (cameras + oracle renders)
//   run     execute the training pipeline and report per-stage metrics
//   eval    score a checkpoint against a dataset's views
//   render  render images from a checkpoint at sampled or loaded poses
//
// Exit codes: 0 ok, 1 runtime failure, 2 usage/config error.
// Progress goes to stderr; machine-readable paths go to stdout.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "fewview/checkpoint.hpp"
#include "fewview/config.hpp"
#include "fewview/dataset.hpp"
#include "fewview/errors.hpp"
#include "fewview/metrics.hpp"
#include "fewview/parallel.hpp"
#include "fewview/pipeline.hpp"
#include "fewview/renderer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

fewview::AnalyticScene scene_from_arg(const std::string& scene_arg) {
  if (fs::exists(scene_arg)) {
    std::ifstream in(scene_arg);
    json j;
    in >> j;
    return fewview::AnalyticScene::from_json(j);
  }
  return fewview::make_scene(scene_arg);
}

struct SynthArgs {
  std::string scene = "tri-sphere";
  int views = 35;
  int res = 64;
  uint64_t seed = 0;
  std::string out;
  double fov_x = 0.6911112;
  double radius = 4.0;
  std::vector<double> elevation{-10.0, 55.0};
  int oracle_samples = 1024;
  std::vector<double> background{1.0, 1.0, 1.0};
};

int cmd_synth(const SynthArgs& args) {
  fewview::SynthConfig cfg;
  cfg.n_views = args.views;
  cfg.resolution = args.res;
  cfg.seed = args.seed;
  cfg.fov_x = args.fov_x;
  cfg.camera_radius = args.radius;
  cfg.elevation_deg_min = args.elevation[0];
  cfg.elevation_deg_max = args.elevation[1];
  cfg.oracle_samples = args.oracle_samples;
  for (int c = 0; c < 3; ++c)
    cfg.background[c] = static_cast<float>(args.background[c]);

  const auto scene = scene_from_arg(args.scene);
  std::fprintf(stderr, "synthesizing %d views at %dx%d...\n", cfg.n_views,
               cfg.resolution, cfg.resolution);
  const auto dataset = fewview::synth_dataset(scene, cfg);
  const std::string manifest = fewview::write_manifest(dataset, args.out);
  std::cout << manifest << "\n";
  return kExitOk;
}

struct RunArgs {
  std::string config_path;
  std::string out;
  std::string scene;
  int stages = 3;
  std::string baseline;
  int64_t seed = -1;
  int threads = -1;
  std::vector<std::string> overrides;  // dotted.path=json
};

int cmd_run(const RunArgs& args) {
  json j = json::object();
  if (!args.config_path.empty()) {
    if (!fs::exists(args.config_path))
      throw fewview::MissingFile("config not found: " + args.config_path);
    std::ifstream in(args.config_path);
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw fewview::SchemaError(std::string("config parse error: ") +
                                 e.what());
    }
  }
  // Flags override the file.
  if (!args.out.empty()) j["output"] = args.out;
  if (!args.scene.empty()) {
    if (fs::exists(args.scene) &&
        args.scene.size() > 5 &&
        args.scene.substr(args.scene.size() - 5) == ".json" &&
        args.scene.find("transforms") != std::string::npos) {
      j["scene"]["type"] = "manifest";
      j["scene"]["manifest"] = args.scene;
    } else {
      j["scene"]["type"] = "analytic";
      j["scene"]["name"] = args.scene;
    }
  }
  if (args.seed >= 0) j["seed"] = static_cast<uint64_t>(args.seed);
  if (args.threads >= 0) j["threads"] = args.threads;
  {
    json run_stages = json::array();
    for (int s = 1; s <= args.stages; ++s) run_stages.push_back(s);
    j["run_stages"] = run_stages;
  }
  if (!args.baseline.empty()) {
    if (args.baseline != "fast-sparse")
      throw fewview::SchemaError("--baseline: only 'fast-sparse' exists");
    j["baseline_fast_sparse"] = true;
  }
  for (const auto& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw fewview::SchemaError("--set expects dotted.path=value");
    std::string pointer = "/" + kv.substr(0, eq);
    for (auto& ch : pointer)
      if (ch == '.') ch = '/';
    json value;
    try {
      value = json::parse(kv.substr(eq + 1));
    } catch (const json::exception&) {
      value = kv.substr(eq + 1);  // bare strings allowed
    }
    j[json::json_pointer(pointer)] = value;
  }

  const auto cfg = fewview::RunConfig::from_json(j);
  const auto report = fewview::run_pipeline(cfg);

  // Stage PSNR table on stdout, then the report path.
  std::printf("%-12s %9s %9s\n", "stage", "psnr", "ssim");
  for (const auto& s : report.stages)
    std::printf("%-12s %9.3f %9.4f\n", s.name.c_str(), s.metrics.mean_psnr,
                s.metrics.mean_ssim);
  if (report.baseline)
    std::printf("%-12s %9.3f %9.4f\n", "fast-sparse",
                report.baseline->metrics.mean_psnr,
                report.baseline->metrics.mean_ssim);
  std::cout << (fs::path(cfg.output) / "report.json").string() << "\n";
  return report.complete ? kExitOk : kExitRuntime;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
  std::string split = "all";
  int n_samples = 64;
  double near = 2.0, far = 6.0;
  int threads = -1;
};

int cmd_eval(const EvalArgs& args) {
  if (args.threads >= 0) fewview::set_thread_limit(args.threads);
  const auto field = fewview::load_checkpoint(args.checkpoint);
  auto dataset = fewview::load_manifest(args.data);
  if (args.split != "all") {
    const fewview::Split want = args.split == "train"
                                    ? fewview::Split::kTrain
                                    : fewview::Split::kTest;
    std::vector<fewview::Frame> kept;
    for (auto& f : dataset.frames)
      if (f.split == want) kept.push_back(std::move(f));
    dataset.frames = std::move(kept);
    if (dataset.frames.empty())
      throw fewview::NotEnoughFrames("eval: no frames tagged '" + args.split +
                                     "'");
  }
  fewview::RenderConfig render_cfg;
  render_cfg.near = args.near;
  render_cfg.far = args.far;
  render_cfg.n_samples = args.n_samples;
  render_cfg.background = dataset.background;

  auto metrics = fewview::evaluate_views(
      *field, dataset, render_cfg,
      args.out.empty() ? "" : (fs::path(args.out) / "renders").string());
  metrics.config_hash = fewview::hash_config(field->describe());

  std::printf("%-12s %9s %9s\n", "view", "psnr", "ssim");
  for (const auto& v : metrics.views)
    std::printf("%-12s %9.3f %9.4f\n", v.name.c_str(), v.psnr, v.ssim);
  std::printf("%-12s %9.3f %9.4f\n", "mean", metrics.mean_psnr,
              metrics.mean_ssim);

  if (!args.out.empty()) {
    std::error_code ec;
    fs::create_directories(args.out, ec);
    std::ofstream out(fs::path(args.out) / "metrics.json");
    if (!out) throw fewview::IoError("cannot write metrics.json");
    out << metrics.to_json().dump(2) << "\n";
    std::cout << (fs::path(args.out) / "metrics.json").string() << "\n";
  }
  return kExitOk;
}

struct RenderArgs {
  std::string checkpoint;
  std::string out;
  std::string poses;  // manifest to copy cameras from
  int views = 8;
  int res = 64;
  uint64_t seed = 0;
  double radius = 4.0;
  std::vector<double> elevation{-10.0, 55.0};
  double fov_x = 0.6911112;
  int n_samples = 64;
  double near = 2.0, far = 6.0;
  std::vector<double> background{1.0, 1.0, 1.0};
  int threads = -1;
};

int cmd_render(const RenderArgs& args) {
  if (args.threads >= 0) fewview::set_thread_limit(args.threads);
  const auto field = fewview::load_checkpoint(args.checkpoint);
  std::vector<fewview::Camera> cameras;
  if (!args.poses.empty()) {
    const auto ds = fewview::load_manifest(args.poses);
    for (const auto& f : ds.frames) cameras.push_back(f.camera);
  } else {
    cameras = fewview::sample_poses_sphere_cap(
        args.views, args.radius, args.elevation[0], args.elevation[1],
        args.seed, args.res, args.res, args.fov_x);
  }
  fewview::RenderConfig render_cfg;
  render_cfg.near = args.near;
  render_cfg.far = args.far;
  render_cfg.n_samples = args.n_samples;
  for (int c = 0; c < 3; ++c)
    render_cfg.background[c] = static_cast<float>(args.background[c]);

  std::error_code ec;
  fs::create_directories(args.out, ec);
  if (ec) throw fewview::IoError("cannot create " + args.out);
  for (size_t i = 0; i < cameras.size(); ++i) {
    const auto img = fewview::render_image(*field, cameras[i], render_cfg);
    char name[32];
    std::snprintf(name, sizeof(name), "view_%03zu.png", i);
    const std::string path = (fs::path(args.out) / name).string();
    fewview::write_png(path, img);
    std::cout << path << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"few-shot novel view synthesis via three-stage distillation"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd =
      app.add_subcommand("synth", "generate an analytic dataset");
  synth_cmd->add_option("--scene", synth.scene,
                        "built-in scene name or scene JSON path");
  synth_cmd->add_option("--views", synth.views, "number of views")
      ->check(CLI::Range(1, 1 << 20));
  synth_cmd->add_option("--res", synth.res, "image resolution")
      ->check(CLI::Range(1, 1 << 20));
  synth_cmd->add_option("--seed", synth.seed, "pose sampling seed");
  synth_cmd->add_option("--out", synth.out, "output directory")->required();
  synth_cmd->add_option("--fov-x", synth.fov_x, "horizontal FOV (radians)");
  synth_cmd->add_option("--radius", synth.radius, "camera orbit radius");
  synth_cmd->add_option("--elevation", synth.elevation,
                        "elevation range in degrees (min max)")
      ->expected(2);
  synth_cmd->add_option("--oracle-samples", synth.oracle_samples,
                        "quadrature steps per ray")
      ->check(CLI::Range(64, 1 << 20));
  synth_cmd->add_option("--background", synth.background, "RGB background")
      ->expected(3);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "execute the training pipeline");
  run_cmd->add_option("--config", run.config_path, "RunConfig JSON file");
  run_cmd->add_option("--out", run.out, "output directory (overrides config)");
  run_cmd->add_option("--scene", run.scene,
                      "analytic scene name or transforms manifest path");
  run_cmd->add_option("--stages", run.stages,
                      "run stages 1..N (default 3)")
      ->check(CLI::Range(1, 3));
  run_cmd->add_option("--baseline", run.baseline,
                      "additionally train a baseline ('fast-sparse')");
  run_cmd->add_option("--seed", run.seed, "run seed (overrides config)");
  run_cmd->add_option("--threads", run.threads, "worker thread cap");
  run_cmd->add_option("--set", run.overrides,
                      "config override as dotted.path=value (repeatable)");

  EvalArgs eval;
  auto* eval_cmd =
      app.add_subcommand("eval", "score a checkpoint against a dataset");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "checkpoint path")
      ->required();
  eval_cmd->add_option("--data", eval.data, "transforms manifest")->required();
  eval_cmd->add_option("--out", eval.out, "directory for renders + metrics");
  eval_cmd->add_option("--split", eval.split, "all | train | test")
      ->check(CLI::IsMember({"all", "train", "test"}));
  eval_cmd->add_option("--n-samples", eval.n_samples, "samples per ray")
      ->check(CLI::Range(2, 1 << 16));
  eval_cmd->add_option("--near", eval.near, "near bound");
  eval_cmd->add_option("--far", eval.far, "far bound");
  eval_cmd->add_option("--threads", eval.threads, "worker thread cap");

  RenderArgs render;
  auto* render_cmd =
      app.add_subcommand("render", "render poses from a checkpoint");
  render_cmd->add_option("--checkpoint", render.checkpoint, "checkpoint path")
      ->required();
  render_cmd->add_option("--out", render.out, "output directory")->required();
  render_cmd->add_option("--poses", render.poses,
                         "manifest whose cameras should be rendered");
  render_cmd->add_option("--views", render.views, "sphere-cap pose count")
      ->check(CLI::Range(1, 1 << 20));
  render_cmd->add_option("--res", render.res, "image resolution")
      ->check(CLI::Range(1, 1 << 20));
  render_cmd->add_option("--seed", render.seed, "pose sampling seed");
  render_cmd->add_option("--radius", render.radius, "camera orbit radius");
  render_cmd->add_option("--elevation", render.elevation,
                         "elevation range in degrees (min max)")
      ->expected(2);
  render_cmd->add_option("--fov-x", render.fov_x, "horizontal FOV (radians)");
  render_cmd->add_option("--n-samples", render.n_samples, "samples per ray");
  render_cmd->add_option("--near", render.near, "near bound");
  render_cmd->add_option("--far", render.far, "far bound");
  render_cmd->add_option("--background", render.background, "RGB background")
      ->expected(3);
  render_cmd->add_option("--threads", render.threads, "worker thread cap");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // exits 0 with the help text
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*synth_cmd) return cmd_synth(synth);
    if (*run_cmd) return cmd_run(run);
    if (*eval_cmd) return cmd_eval(eval);
    if (*render_cmd) return cmd_render(render);
  } catch (const fewview::SchemaError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const fewview::InvalidBounds& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
