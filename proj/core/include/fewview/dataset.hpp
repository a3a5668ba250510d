#pragma once

#include <Eigen/Core>
#include <memory>
#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "fewview/field.hpp"
#include "fewview/geometry.hpp"
#include "fewview/image.hpp"

namespace fewview {

// ---------------------------------------------------------------------------
// Analytic scenes: closed-form density/albedo fields used as ground truth.

struct ScenePrimitive {
  enum class Shape { kSphere, kBox } shape = Shape::kSphere;
  Vec3 center = Vec3::Zero();       // sphere center / box center
  double radius = 0.5;              // sphere only
  Vec3 half_extent = Vec3::Zero();  // box only
  double density = 10.0;
  Eigen::Vector3f albedo{0.5f, 0.5f, 0.5f};
  double falloff = 0.1;  // shell width of the smooth density ramp; 0 = hard
};

struct AnalyticScene {
  std::vector<ScenePrimitive> primitives;

  double density_at(const Vec3& p) const;
  // Density-weighted albedo mix; zero where density vanishes.
  Eigen::Vector3d color_at(const Vec3& p) const;

  nlohmann::json to_json() const;
  static AnalyticScene from_json(const nlohmann::json& j);
};

// The standard desk scene: three soft colored spheres with distinct radii,
// placed off-center. Fixed here so thresholds are stable across machines.
AnalyticScene tri_sphere_scene();
// Single centered soft sphere, handy for axis-aligned checks.
AnalyticScene single_sphere_scene();
// Lookup by name ("tri-sphere", "single-sphere"); throws SchemaError.
AnalyticScene make_scene(const std::string& name);

// Parameter-free radiance field backed by an analytic scene, so the
// differentiable renderer can be pointed at exact ground truth.
template <typename T>
class AnalyticSceneFieldT final : public RadianceFieldT<T> {
 public:
  using Mat = MatX<T>;
  using Vec = VecX<T>;

  explicit AnalyticSceneFieldT(AnalyticScene scene)
      : scene_(std::move(scene)) {}

  std::string kind() const override { return "analytic"; }
  std::span<T> parameters() override { return {}; }
  std::span<const T> parameters() const override { return {}; }

  void eval(const Mat& positions, const Mat& directions, Vec& sigma,
            Mat& rgb) const override {
    (void)directions;
    const Eigen::Index n = positions.cols();
    sigma.resize(n);
    rgb.resize(3, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vec3 p = positions.col(i).template cast<double>();
      sigma[i] = static_cast<T>(scene_.density_at(p));
      rgb.col(i) = scene_.color_at(p).cast<T>();
    }
  }

  std::unique_ptr<FieldCacheT<T>> make_cache() const override {
    return std::make_unique<FieldCacheT<T>>();
  }

  void eval_with_cache(const Mat& positions, const Mat& directions,
                       Vec& sigma, Mat& rgb,
                       FieldCacheT<T>&) const override {
    eval(positions, directions, sigma, rgb);
  }

  void backward(const FieldCacheT<T>&, const Vec&, const Mat&,
                std::span<T>) const override {}  // no parameters

  nlohmann::json describe() const override {
    return {{"kind", "analytic"}, {"scene", scene_.to_json()}};
  }

  const AnalyticScene& scene() const { return scene_; }

 private:
  AnalyticScene scene_;
};

using AnalyticSceneField = AnalyticSceneFieldT<float>;

// ---------------------------------------------------------------------------
// Datasets.

enum class Split { kUnassigned, kTrain, kTest };

struct Frame {
  Camera camera;
  Image image;
  std::string name;  // image stem, e.g. "r_000"
  Split split = Split::kUnassigned;
};

struct SceneDataset {
  double camera_angle_x = 0.6911112;  // shared horizontal field of view
  Eigen::Vector3f background{1.0f, 1.0f, 1.0f};
  bool pseudo = false;      // true for model-rendered (pseudo ground truth)
  nlohmann::json metadata;  // generator spec, seed, free-form
  std::vector<Frame> frames;

  int width() const { return frames.empty() ? 0 : frames[0].camera.width; }
  int height() const { return frames.empty() ? 0 : frames[0].camera.height; }
  void validate() const;  // shared image sizes + camera invariants
};

// Blender-synthetic style manifest: `camera_angle_x` plus a `frames` array
// of {file_path, transform_matrix}. Unknown frame keys are ignored so real
// exports load unchanged; our own extensions (background, pseudo, split,
// metadata) round-trip when present.
SceneDataset load_manifest(const std::string& manifest_path,
                           const Eigen::Vector3f& default_background = {
                               1.0f, 1.0f, 1.0f});
// Writes dir/transforms.json and dir/images/<name>.png; returns the
// manifest path.
std::string write_manifest(const SceneDataset& dataset,
                           const std::string& dir);

enum class SplitRule { kFirstN, kUniform };

// Disjoint, exhaustive train/test split. kFirstN takes the first n frames
// in manifest order; kUniform takes evenly spaced indices.
std::pair<SceneDataset, SceneDataset> make_sparse_split(
    const SceneDataset& dataset, int n_train, SplitRule rule);

std::vector<int> split_indices(int n_frames, int n_train, SplitRule rule);

// ---------------------------------------------------------------------------
// Quadrature oracle: midpoint-rule integration of the volume rendering
// integral against the analytic fields. This is intentionally a separate
// code path from renderer compositing: agreement between the two on analytic
// scenes is evidence, not tautology.

Image oracle_render(const AnalyticScene& scene, const Camera& camera,
                    int n_quadrature, double near = 2.0, double far = 6.0,
                    const Eigen::Vector3f& background = {1.0f, 1.0f, 1.0f});

struct SynthConfig {
  int n_views = 35;
  int resolution = 64;
  uint64_t seed = 0;
  double fov_x = 0.6911112;
  double camera_radius = 4.0;
  double elevation_deg_min = -10.0;
  double elevation_deg_max = 55.0;
  int oracle_samples = 1024;
  double near = 2.0;
  double far = 6.0;
  Eigen::Vector3f background{1.0f, 1.0f, 1.0f};
};

// Sphere-cap cameras + oracle-rendered, 8-bit-quantized ground truth.
// Deterministic for a fixed config.
SceneDataset synth_dataset(const AnalyticScene& scene, const SynthConfig& cfg);

}  // namespace fewview
