#include "fewview/pipeline.hpp"

#include <chrono>
#include <filesystem>

#include "fewview/checkpoint.hpp"
#include "fewview/errors.hpp"
#include "fewview/parallel.hpp"
#include "fewview/trainer.hpp"

namespace fewview {

namespace fs = std::filesystem;
using nlohmann::json;

json StageReport::to_json() const {
  json j = metrics.to_json();
  j["index"] = index;
  j["name"] = name;
  j["field"] = field_kind;
  j["iterations"] = iterations;
  j["initial_loss"] = initial_loss;
  j["final_loss"] = final_loss;
  j["wall_seconds"] = wall_seconds;
  j["checkpoint"] = checkpoint_path;
  j["loss_csv"] = loss_csv_path;
  return j;
}

json PipelineReport::to_json() const {
  json jstages = json::array();
  for (const auto& s : stages) jstages.push_back(s.to_json());
  json j{{"complete", complete},
         {"error", error.empty() ? json(nullptr) : json(error)},
         {"config", config_snapshot},
         {"config_hash", config_hash},
         {"stages", std::move(jstages)},
         {"baseline", baseline ? baseline->to_json() : json(nullptr)},
         {"pseudo",
          {{"manifest", pseudo_manifest}, {"psnr_vs_gt", pseudo_psnr_vs_gt}}},
         {"total_wall_seconds", total_wall_seconds}};
  if (baseline) {
    j["baseline_margin_db"] = baseline_margin_db;
    j["required_margin_db"] = required_margin_db;
  }
  return j;
}

MetricReport evaluate_views(const RadianceField& field,
                            const SceneDataset& views,
                            const RenderConfig& render_cfg,
                            const std::string& render_dir) {
  if (!render_dir.empty()) {
    std::error_code ec;
    fs::create_directories(render_dir, ec);
    if (ec) throw IoError("cannot create " + render_dir + ": " + ec.message());
  }
  MetricReport report;
  for (const auto& frame : views.frames) {
    Image rendered = render_image(field, frame.camera, render_cfg);
    if (!render_dir.empty())
      write_png((fs::path(render_dir) / (frame.name + ".png")).string(),
                rendered);
    ViewMetrics vm;
    vm.name = frame.name;
    vm.psnr = psnr(rendered, frame.image);
    vm.ssim = ssim(rendered, frame.image);
    report.views.push_back(std::move(vm));
  }
  report.finalize();
  return report;
}

namespace {

std::vector<Camera> pseudo_poses(const RunConfig& cfg,
                                 const SceneDataset& full,
                                 const SceneDataset& test) {
  if (cfg.pseudo.source == PseudoConfig::Source::kDatasetRest) {
    // Every pose of the source dataset except the training views.
    std::vector<Camera> poses;
    for (const auto& f : test.frames) poses.push_back(f.camera);
    if (poses.empty())
      throw NotEnoughFrames("pseudo: dataset-rest needs held-out frames");
    return poses;
  }
  const uint64_t seed =
      cfg.pseudo.seed ? *cfg.pseudo.seed : derive_seed(cfg.seed, 9);
  return sample_poses_sphere_cap(
      cfg.pseudo.count, cfg.pseudo.camera_radius, cfg.pseudo.elevation_deg_min,
      cfg.pseudo.elevation_deg_max, seed, full.width(), full.height(),
      full.camera_angle_x);
}

StageReport make_stage_report(int index, const std::string& name,
                              const std::string& field_kind,
                              const StageConfig& cfg,
                              const StageResult& result,
                              MetricReport metrics,
                              const std::string& checkpoint_path,
                              const std::string& loss_csv_path) {
  StageReport report;
  report.index = index;
  report.name = name;
  report.field_kind = field_kind;
  report.iterations = cfg.iterations;
  report.metrics = std::move(metrics);
  report.initial_loss = result.loss_curve.empty() ? 0.0 : result.loss_curve.front();
  report.final_loss = result.loss_curve.empty() ? 0.0 : result.loss_curve.back();
  report.wall_seconds = result.wall_seconds;
  report.checkpoint_path = checkpoint_path;
  report.loss_csv_path = loss_csv_path;
  return report;
}

}  // namespace

PipelineReport run_pipeline(const RunConfig& cfg) {
  const auto t_start = std::chrono::steady_clock::now();
  set_thread_limit(cfg.threads);

  PipelineReport report;
  report.config_snapshot = cfg.to_json();
  report.config_hash = hash_config(report.config_snapshot);
  report.required_margin_db = kBaselineMarginDb;

  const fs::path out(cfg.output);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + cfg.output + ": " + ec.message());

  std::vector<std::pair<std::string, std::vector<double>>> loss_curves;

  try {
    // Source data.
    SceneDataset full;
    std::optional<AnalyticScene> analytic;
    if (cfg.scene.type == SceneConfig::Type::kAnalytic) {
      analytic = cfg.scene.analytic_scene();
      full = synth_dataset(*analytic, cfg.scene.synth);
    } else {
      full = load_manifest(cfg.scene.manifest, cfg.render.background);
    }
    auto [train, test] = make_sparse_split(full, cfg.n_train, cfg.split_rule);

    // Persist the source data with its split tags so eval runs can point at
    // exactly what this pipeline saw.
    {
      const auto train_idx = split_indices(
          static_cast<int>(full.frames.size()), cfg.n_train, cfg.split_rule);
      std::vector<bool> is_train(full.frames.size(), false);
      for (int i : train_idx) is_train[i] = true;
      SceneDataset tagged = full;
      for (size_t i = 0; i < tagged.frames.size(); ++i)
        tagged.frames[i].split = is_train[i] ? Split::kTrain : Split::kTest;
      write_manifest(tagged, (out / "dataset").string());
    }

    RenderConfig eval_cfg = cfg.render;
    eval_cfg.background = full.background;
    eval_cfg.jitter = JitterMode::kMidpoint;

    auto reg = make_field(cfg.reg_field);
    auto fast = make_field(cfg.fast_field);
    const bool run2 = cfg.run_stages.size() >= 2;
    const bool run3 = cfg.run_stages.size() >= 3;

    // Stage 1: regularized training on the sparse originals.
    {
      std::fprintf(stderr, "[stage1] training %s on %zu sparse views\n",
                   reg->kind().c_str(), train.frames.size());
      const auto result = train_stage1(train, *reg, cfg.stage1);
      fs::create_directories(out / "stage1");
      const std::string ckpt = (out / "stage1" / "checkpoint.ckpt").string();
      save_checkpoint(ckpt, *reg);
      loss_curves.emplace_back("stage1/loss", result.loss_curve);
      auto metrics = evaluate_views(*reg, test, eval_cfg,
                                    (out / "renders" / "stage1").string());
      report.stages.push_back(make_stage_report(
          1, "stage1", reg->kind(), cfg.stage1, result, std::move(metrics),
          "stage1/checkpoint.ckpt", "stage1/loss.csv"));
      std::fprintf(stderr, "[stage1] test psnr %.3f dB\n",
                   report.stages.back().metrics.mean_psnr);
    }

    // Stage 2: distill into the fast field via pseudo-dense views.
    if (run2) {
      const auto poses = pseudo_poses(cfg, full, test);
      std::fprintf(stderr, "[stage2] rendering %zu pseudo views\n",
                   poses.size());
      SceneDataset pseudo = generate_pseudo_views(*reg, poses, eval_cfg);

      // Log pseudo-label quality against ground truth where it exists.
      if (analytic) {
        double acc = 0.0;
        for (size_t i = 0; i < poses.size(); ++i) {
          const Image gt =
              quantized(oracle_render(*analytic, poses[i],
                                      cfg.scene.synth.oracle_samples,
                                      cfg.render.near, cfg.render.far,
                                      full.background));
          acc += psnr(pseudo.frames[i].image, gt);
        }
        report.pseudo_psnr_vs_gt = acc / double(poses.size());
      } else if (cfg.pseudo.source == PseudoConfig::Source::kDatasetRest) {
        double acc = 0.0;
        for (size_t i = 0; i < poses.size(); ++i)
          acc += psnr(pseudo.frames[i].image, test.frames[i].image);
        report.pseudo_psnr_vs_gt = acc / double(poses.size());
      }

      if (cfg.pseudo.include_train_views)
        for (const auto& f : train.frames) pseudo.frames.push_back(f);
      write_manifest(pseudo, (out / "pseudo").string());
      report.pseudo_manifest = "pseudo/transforms.json";

      std::fprintf(stderr, "[stage2] training %s on %zu dense views\n",
                   fast->kind().c_str(), pseudo.frames.size());
      const auto result = train_stage2(pseudo, *fast, cfg.stage2);
      fs::create_directories(out / "stage2");
      save_checkpoint((out / "stage2" / "checkpoint.ckpt").string(), *fast);
      loss_curves.emplace_back("stage2/loss", result.loss_curve);
      auto metrics = evaluate_views(*fast, test, eval_cfg,
                                    (out / "renders" / "stage2").string());
      report.stages.push_back(make_stage_report(
          2, "stage2", fast->kind(), cfg.stage2, result, std::move(metrics),
          "stage2/checkpoint.ckpt", "stage2/loss.csv"));
      std::fprintf(stderr, "[stage2] test psnr %.3f dB\n",
                   report.stages.back().metrics.mean_psnr);
    }

    // Stage 3: fine-tune on the sparse originals.
    if (run3) {
      std::fprintf(stderr, "[stage3] fine-tuning on %zu sparse views\n",
                   train.frames.size());
      const auto result = train_stage3(train, *fast, cfg.stage3);
      fs::create_directories(out / "stage3");
      save_checkpoint((out / "stage3" / "checkpoint.ckpt").string(), *fast);
      loss_curves.emplace_back("stage3/loss", result.loss_curve);
      auto metrics = evaluate_views(*fast, test, eval_cfg,
                                    (out / "renders" / "stage3").string());
      report.stages.push_back(make_stage_report(
          3, "stage3", fast->kind(), cfg.stage3, result, std::move(metrics),
          "stage3/checkpoint.ckpt", "stage3/loss.csv"));
      std::fprintf(stderr, "[stage3] test psnr %.3f dB\n",
                   report.stages.back().metrics.mean_psnr);
    }

    // Optional baseline: the fast field alone on the sparse views with the
    // same total budget as stages 2 + 3.
    if (cfg.baseline_fast_sparse) {
      auto fresh = make_field(cfg.fast_field);
      StageConfig bl_cfg = cfg.stage2;
      bl_cfg.iterations = cfg.stage2.iterations + cfg.stage3.iterations;
      bl_cfg.seed = derive_seed(cfg.seed, 42);
      std::fprintf(stderr,
                   "[baseline] training %s directly on %zu sparse views "
                   "(%d iters)\n",
                   fresh->kind().c_str(), train.frames.size(),
                   bl_cfg.iterations);
      const auto result = train_stage2(train, *fresh, bl_cfg);
      fs::create_directories(out / "baseline");
      save_checkpoint((out / "baseline" / "checkpoint.ckpt").string(), *fresh);
      loss_curves.emplace_back("baseline/loss", result.loss_curve);
      auto metrics = evaluate_views(*fresh, test, eval_cfg,
                                    (out / "renders" / "baseline").string());
      report.baseline = make_stage_report(
          0, "fast-sparse", fresh->kind(), bl_cfg, result, std::move(metrics),
          "baseline/checkpoint.ckpt", "baseline/loss.csv");
      if (!report.stages.empty()) {
        report.baseline_margin_db =
            report.stages.back().metrics.mean_psnr -
            report.baseline->metrics.mean_psnr;
        std::fprintf(stderr, "[baseline] test psnr %.3f dB (margin %.3f dB)\n",
                     report.baseline->metrics.mean_psnr,
                     report.baseline_margin_db);
      }
    }

    report.complete = true;
  } catch (const std::exception& e) {
    report.complete = false;
    report.error = e.what();
    std::fprintf(stderr, "pipeline error: %s\n", e.what());
  }

  report.total_wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  emit_report(report.to_json(), loss_curves, cfg.output);
  return report;
}

}  // namespace fewview
