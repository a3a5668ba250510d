#include "fewview/config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "fewview/errors.hpp"

namespace fewview {

using nlohmann::json;

uint64_t derive_seed(uint64_t base, uint64_t salt) {
  uint64_t z = base + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

void check_keys(const json& j, const std::string& path,
                const std::set<std::string>& allowed) {
  if (!j.is_object()) throw SchemaError(path + ": expected an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key))
      throw SchemaError("unknown key '" + (path.empty() ? key : path + "." + key) + "'");
}

const std::set<std::string>& field_keys(const std::string& kind,
                                        const std::string& path) {
  static const std::set<std::string> mlp{
      "kind",          "l_pos",         "l_dir",
      "include_identity", "hidden_layers", "hidden_width",
      "color_hidden_width", "mask_direction", "freq_ramp_fraction",
      "init_seed"};
  static const std::set<std::string> vm{
      "kind",        "bbox_min",      "bbox_max",        "resolution",
      "density_rank", "appearance_rank", "feature_dim",  "dir_bands",
      "dir_identity", "density_shift", "init_scale",
      "decoder_lr_scale", "init_seed"};
  static const std::set<std::string> dense{
      "kind",     "bbox_min",      "bbox_max",   "resolution",
      "density_shift", "init_scale", "init_seed"};
  if (kind == "mlp") return mlp;
  if (kind == "vm") return vm;
  if (kind == "dense") return dense;
  throw SchemaError(path + ".kind: unknown field kind '" + kind + "'");
}

void validate_field_block(const json& j, const std::string& path) {
  if (!j.is_object() || !j.contains("kind"))
    throw SchemaError(path + ": expected an object with 'kind'");
  check_keys(j, path, field_keys(j["kind"].get<std::string>(), path));
}

void parse_vec3f(const json& j, const std::string& path,
                 Eigen::Vector3f& out) {
  if (!j.is_array() || j.size() != 3)
    throw SchemaError(path + ": expected [r, g, b]");
  for (int c = 0; c < 3; ++c) out[c] = j.at(c).get<float>();
}

StageConfig parse_stage(const json& j, const std::string& path,
                        const StageConfig& defaults, uint64_t run_seed,
                        int stage_index, const RenderConfig& render) {
  check_keys(j, path,
             {"iterations", "rays_per_batch", "lr", "lr_final_factor",
              "occlusion_weight", "occlusion_k", "n_samples", "seed"});
  StageConfig cfg = defaults;
  cfg.iterations = j.value("iterations", cfg.iterations);
  cfg.rays_per_batch = j.value("rays_per_batch", cfg.rays_per_batch);
  cfg.lr = j.value("lr", cfg.lr);
  cfg.lr_final_factor = j.value("lr_final_factor", cfg.lr_final_factor);
  cfg.occlusion_weight = j.value("occlusion_weight", cfg.occlusion_weight);
  cfg.occlusion_k = j.value("occlusion_k", cfg.occlusion_k);
  const int default_samples = cfg.render.n_samples;  // per-stage default
  cfg.render = render;
  cfg.render.n_samples = default_samples;
  if (j.contains("n_samples") && !j["n_samples"].is_null())
    cfg.render.n_samples = j["n_samples"].get<int>();
  cfg.seed = j.contains("seed") && !j["seed"].is_null()
                 ? j["seed"].get<uint64_t>()
                 : derive_seed(run_seed, 100 + stage_index);
  cfg.validate();
  return cfg;
}

json stage_to_json(const StageConfig& cfg) {
  return {{"iterations", cfg.iterations},
          {"rays_per_batch", cfg.rays_per_batch},
          {"lr", cfg.lr},
          {"lr_final_factor", cfg.lr_final_factor},
          {"occlusion_weight", cfg.occlusion_weight},
          {"occlusion_k", cfg.occlusion_k},
          {"n_samples", cfg.render.n_samples},
          {"seed", cfg.seed}};
}

}  // namespace

AnalyticScene SceneConfig::analytic_scene() const {
  if (!primitives.is_null())
    return AnalyticScene::from_json(json{{"primitives", primitives}});
  return make_scene(name);
}

const StageConfig& RunConfig::stage(int index) const {
  switch (index) {
    case 1: return stage1;
    case 2: return stage2;
    case 3: return stage3;
    default: throw InvalidBounds("stage index must be 1..3");
  }
}

RunConfig RunConfig::defaults() {
  RunConfig cfg;
  cfg.scene.synth.n_views = 35;
  cfg.scene.synth.resolution = 64;
  cfg.render.near = 2.0;
  cfg.render.far = 6.0;
  cfg.render.n_samples = 64;

  cfg.reg_field = {{"kind", "mlp"}};
  cfg.fast_field = {{"kind", "vm"}};

  cfg.stage1.iterations = 3000;
  cfg.stage1.rays_per_batch = 1024;
  cfg.stage1.lr = 2e-3;
  cfg.stage1.lr_final_factor = 0.1;
  cfg.stage1.occlusion_weight = 0.01;
  cfg.stage1.occlusion_k = 10;
  cfg.stage1.render = cfg.render;
  cfg.stage1.render.n_samples = 48;

  cfg.stage2.iterations = 2000;
  cfg.stage2.rays_per_batch = 1024;
  cfg.stage2.lr = 0.02;
  cfg.stage2.lr_final_factor = 0.1;
  cfg.stage2.render = cfg.render;

  // Fine-tuning: a strict continuation at a tenth of the stage-2 rate so
  // the pseudo-dense geometry is refined rather than forgotten.
  cfg.stage3.iterations = 500;
  cfg.stage3.rays_per_batch = 1024;
  cfg.stage3.lr = 0.002;
  cfg.stage3.lr_final_factor = 0.1;
  cfg.stage3.render = cfg.render;

  cfg.stage1.seed = derive_seed(cfg.seed, 101);
  cfg.stage2.seed = derive_seed(cfg.seed, 102);
  cfg.stage3.seed = derive_seed(cfg.seed, 103);
  return cfg;
}

RunConfig RunConfig::from_json(const json& j) {
  check_keys(j, "",
             {"seed", "threads", "output", "scene", "split", "render",
              "reg_field", "fast_field", "pseudo", "stages", "run_stages",
              "baseline_fast_sparse"});
  RunConfig cfg = defaults();
  cfg.seed = j.value("seed", cfg.seed);
  cfg.threads = j.value("threads", cfg.threads);
  cfg.output = j.value("output", cfg.output);

  if (j.contains("scene")) {
    const auto& js = j["scene"];
    check_keys(js, "scene",
               {"type", "name", "primitives", "manifest", "views",
                "resolution", "fov_x", "camera_radius", "elevation_deg",
                "oracle_samples", "background"});
    const std::string type = js.value("type", "analytic");
    if (type == "analytic") {
      cfg.scene.type = SceneConfig::Type::kAnalytic;
    } else if (type == "manifest") {
      cfg.scene.type = SceneConfig::Type::kManifest;
      if (!js.contains("manifest"))
        throw SchemaError("scene.manifest: required for type 'manifest'");
    } else {
      throw SchemaError("scene.type: must be 'analytic' or 'manifest'");
    }
    cfg.scene.name = js.value("name", cfg.scene.name);
    if (js.contains("primitives")) cfg.scene.primitives = js["primitives"];
    cfg.scene.manifest = js.value("manifest", cfg.scene.manifest);
    cfg.scene.synth.n_views = js.value("views", cfg.scene.synth.n_views);
    cfg.scene.synth.resolution =
        js.value("resolution", cfg.scene.synth.resolution);
    cfg.scene.synth.fov_x = js.value("fov_x", cfg.scene.synth.fov_x);
    cfg.scene.synth.camera_radius =
        js.value("camera_radius", cfg.scene.synth.camera_radius);
    if (js.contains("elevation_deg")) {
      cfg.scene.synth.elevation_deg_min =
          js["elevation_deg"].at(0).get<double>();
      cfg.scene.synth.elevation_deg_max =
          js["elevation_deg"].at(1).get<double>();
    }
    cfg.scene.synth.oracle_samples =
        js.value("oracle_samples", cfg.scene.synth.oracle_samples);
    if (js.contains("background"))
      parse_vec3f(js["background"], "scene.background",
                  cfg.scene.synth.background);
  }
  cfg.scene.synth.seed = derive_seed(cfg.seed, 7);

  if (j.contains("split")) {
    check_keys(j["split"], "split", {"rule", "n_train"});
    const std::string rule = j["split"].value("rule", "uniform");
    if (rule == "uniform") cfg.split_rule = SplitRule::kUniform;
    else if (rule == "first-n") cfg.split_rule = SplitRule::kFirstN;
    else throw SchemaError("split.rule: must be 'uniform' or 'first-n'");
    cfg.n_train = j["split"].value("n_train", cfg.n_train);
    if (cfg.n_train < 1) throw SchemaError("split.n_train: must be >= 1");
  }

  if (j.contains("render")) {
    check_keys(j["render"], "render", {"near", "far", "n_samples"});
    cfg.render.near = j["render"].value("near", cfg.render.near);
    cfg.render.far = j["render"].value("far", cfg.render.far);
    cfg.render.n_samples = j["render"].value("n_samples", cfg.render.n_samples);
  }
  cfg.render.background = cfg.scene.synth.background;
  cfg.scene.synth.near = cfg.render.near;
  cfg.scene.synth.far = cfg.render.far;

  if (j.contains("reg_field")) {
    validate_field_block(j["reg_field"], "reg_field");
    cfg.reg_field = j["reg_field"];
  }
  if (j.contains("fast_field")) {
    validate_field_block(j["fast_field"], "fast_field");
    cfg.fast_field = j["fast_field"];
  }

  if (j.contains("pseudo")) {
    const auto& jp = j["pseudo"];
    check_keys(jp, "pseudo",
               {"count", "source", "include_train_views", "camera_radius",
                "elevation_deg", "seed"});
    cfg.pseudo.count = jp.value("count", cfg.pseudo.count);
    const std::string source = jp.value("source", "sphere-cap");
    if (source == "sphere-cap")
      cfg.pseudo.source = PseudoConfig::Source::kSphereCap;
    else if (source == "dataset-rest")
      cfg.pseudo.source = PseudoConfig::Source::kDatasetRest;
    else
      throw SchemaError("pseudo.source: must be 'sphere-cap' or 'dataset-rest'");
    cfg.pseudo.include_train_views =
        jp.value("include_train_views", cfg.pseudo.include_train_views);
    cfg.pseudo.camera_radius =
        jp.value("camera_radius", cfg.pseudo.camera_radius);
    if (jp.contains("elevation_deg")) {
      cfg.pseudo.elevation_deg_min = jp["elevation_deg"].at(0).get<double>();
      cfg.pseudo.elevation_deg_max = jp["elevation_deg"].at(1).get<double>();
    }
    if (jp.contains("seed") && !jp["seed"].is_null())
      cfg.pseudo.seed = jp["seed"].get<uint64_t>();
    if (cfg.pseudo.count < 1)
      throw SchemaError("pseudo.count: must be >= 1");
  }

  // Defaults mirror the scene's camera rig unless overridden.
  if (j.contains("scene") && !j.contains("pseudo")) {
    cfg.pseudo.camera_radius = cfg.scene.synth.camera_radius;
    cfg.pseudo.elevation_deg_min = cfg.scene.synth.elevation_deg_min;
    cfg.pseudo.elevation_deg_max = cfg.scene.synth.elevation_deg_max;
  }

  const StageConfig base_defaults[3] = {defaults().stage1, defaults().stage2,
                                        defaults().stage3};
  if (j.contains("stages")) {
    check_keys(j["stages"], "stages", {"stage1", "stage2", "stage3"});
    for (int s = 1; s <= 3; ++s) {
      const std::string key = "stage" + std::to_string(s);
      StageConfig& target = s == 1 ? cfg.stage1 : (s == 2 ? cfg.stage2 : cfg.stage3);
      if (j["stages"].contains(key)) {
        target = parse_stage(j["stages"][key], "stages." + key,
                             base_defaults[s - 1], cfg.seed, s, cfg.render);
      } else {
        target = base_defaults[s - 1];
        target.render.near = cfg.render.near;
        target.render.far = cfg.render.far;
        target.render.background = cfg.render.background;
        target.seed = derive_seed(cfg.seed, 100 + s);
      }
    }
  } else {
    for (int s = 1; s <= 3; ++s) {
      StageConfig& target = s == 1 ? cfg.stage1 : (s == 2 ? cfg.stage2 : cfg.stage3);
      target = base_defaults[s - 1];
      target.render.near = cfg.render.near;
      target.render.far = cfg.render.far;
      target.render.background = cfg.render.background;
      target.seed = derive_seed(cfg.seed, 100 + s);
    }
  }

  if (j.contains("run_stages")) {
    cfg.run_stages.clear();
    for (const auto& v : j["run_stages"]) cfg.run_stages.push_back(v.get<int>());
  }
  // Stages must be the prefix 1..k: later stages consume earlier outputs.
  std::vector<int> expect{1, 2, 3};
  expect.resize(cfg.run_stages.size());
  if (cfg.run_stages.empty() || cfg.run_stages.size() > 3 ||
      cfg.run_stages != expect)
    throw SchemaError("run_stages: must be [1], [1,2] or [1,2,3]");

  cfg.baseline_fast_sparse =
      j.value("baseline_fast_sparse", cfg.baseline_fast_sparse);
  return cfg;
}

json RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["threads"] = threads;
  j["output"] = output;
  json js{{"type", scene.type == SceneConfig::Type::kAnalytic ? "analytic"
                                                              : "manifest"},
          {"name", scene.name},
          {"views", scene.synth.n_views},
          {"resolution", scene.synth.resolution},
          {"fov_x", scene.synth.fov_x},
          {"camera_radius", scene.synth.camera_radius},
          {"elevation_deg",
           {scene.synth.elevation_deg_min, scene.synth.elevation_deg_max}},
          {"oracle_samples", scene.synth.oracle_samples},
          {"background",
           {scene.synth.background.x(), scene.synth.background.y(),
            scene.synth.background.z()}}};
  if (!scene.primitives.is_null()) js["primitives"] = scene.primitives;
  if (!scene.manifest.empty()) js["manifest"] = scene.manifest;
  j["scene"] = std::move(js);
  j["split"] = {{"rule", split_rule == SplitRule::kUniform ? "uniform"
                                                           : "first-n"},
                {"n_train", n_train}};
  j["render"] = {{"near", render.near},
                 {"far", render.far},
                 {"n_samples", render.n_samples}};
  j["reg_field"] = reg_field;
  j["fast_field"] = fast_field;
  j["pseudo"] = {
      {"count", pseudo.count},
      {"source", pseudo.source == PseudoConfig::Source::kSphereCap
                     ? "sphere-cap"
                     : "dataset-rest"},
      {"include_train_views", pseudo.include_train_views},
      {"camera_radius", pseudo.camera_radius},
      {"elevation_deg", {pseudo.elevation_deg_min, pseudo.elevation_deg_max}},
      {"seed", pseudo.seed ? json(*pseudo.seed) : json(nullptr)}};
  j["stages"] = {{"stage1", stage_to_json(stage1)},
                 {"stage2", stage_to_json(stage2)},
                 {"stage3", stage_to_json(stage3)}};
  j["run_stages"] = run_stages;
  j["baseline_fast_sparse"] = baseline_fast_sparse;
  return j;
}

RunConfig load_run_config(const std::string& path) {
  if (!std::filesystem::exists(path))
    throw MissingFile("config not found: " + path);
  std::ifstream in(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("config parse error: ") + e.what());
  }
  return RunConfig::from_json(j);
}

}  // namespace fewview
