#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fewview/dataset.hpp"
#include "fewview/field.hpp"
#include "fewview/renderer.hpp"

namespace fewview {

struct StageConfig {
  int iterations = 1000;        // 0 is allowed: the stage is a no-op
  int rays_per_batch = 1024;
  double lr = 1e-3;
  double lr_final_factor = 0.1;  // lr decays exponentially to lr * factor
  double occlusion_weight = 0.0;
  int occlusion_k = 10;
  uint64_t seed = 0;
  RenderConfig render;  // near/far/sample count for training rays

  void validate() const;
};

struct StageResult {
  std::vector<double> loss_curve;  // total loss per iteration
  double wall_seconds = 0.0;
};

// Stage 1: trains the regularization field on the sparse views with the
// frequency ramp (via the field's progress hook) and the occlusion penalty.
StageResult train_stage1(const SceneDataset& sparse_train,
                         RadianceField& reg_field, const StageConfig& cfg);

// Stage 2: trains the fast field on (pseudo-)dense views with the plain
// reconstruction loss; no frequency mask, no occlusion term.
StageResult train_stage2(const SceneDataset& dense_train,
                         RadianceField& fast_field, const StageConfig& cfg);

// Stage 3: continues training the stage-2 field on the original sparse
// views. Strict continuation: zero iterations leave the field untouched.
// Optimizer moments start fresh.
StageResult train_stage3(const SceneDataset& sparse_train,
                         RadianceField& fast_field, const StageConfig& cfg);

// Renders one image per pose from the regularization field (fixed-midpoint
// jitter), quantizes to 8 bit and packs the result as a pseudo dataset.
SceneDataset generate_pseudo_views(const RadianceField& reg_field,
                                   const std::vector<Camera>& poses,
                                   const RenderConfig& render_cfg);
// Same, loading the field from a checkpoint file first.
SceneDataset generate_pseudo_views(const std::string& checkpoint_path,
                                   const std::vector<Camera>& poses,
                                   const RenderConfig& render_cfg);

}  // namespace fewview
