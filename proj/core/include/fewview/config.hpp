#pragma once

#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "fewview/dataset.hpp"
#include "fewview/trainer.hpp"

namespace fewview {

struct SceneConfig {
  enum class Type { kAnalytic, kManifest } type = Type::kAnalytic;
  std::string name = "tri-sphere";  // built-in analytic scene
  nlohmann::json primitives;        // optional inline scene definition
  std::string manifest;             // for type = kManifest
  SynthConfig synth;                // analytic synthesis parameters

  AnalyticScene analytic_scene() const;
};

struct PseudoConfig {
  enum class Source { kSphereCap, kDatasetRest } source = Source::kSphereCap;
  int count = 40;
  bool include_train_views = true;
  double camera_radius = 4.0;
  double elevation_deg_min = -10.0;
  double elevation_deg_max = 55.0;
  std::optional<uint64_t> seed;  // default: derived from the run seed
};

// Full description of one run. Every knob that any module exposes is
// present here so a run is reproducible from this single artifact; the
// serialized form is schema-checked and rejects unknown keys.
struct RunConfig {
  uint64_t seed = 0;
  int threads = 0;  // 0 = hardware concurrency
  std::string output = "out";
  SceneConfig scene;
  SplitRule split_rule = SplitRule::kUniform;
  int n_train = 5;
  RenderConfig render;  // evaluation + pseudo-view rendering
  nlohmann::json reg_field;   // field architecture blocks ("kind" + knobs)
  nlohmann::json fast_field;
  PseudoConfig pseudo;
  StageConfig stage1, stage2, stage3;
  std::vector<int> run_stages{1, 2, 3};
  bool baseline_fast_sparse = false;

  // Effective per-stage seeds/rendering, derived after parsing.
  const StageConfig& stage(int index) const;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig defaults();
};

RunConfig load_run_config(const std::string& path);

// Seed mixing for derived streams (stages, pseudo poses).
uint64_t derive_seed(uint64_t base, uint64_t salt);

}  // namespace fewview
