#include "fewview/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fewview/errors.hpp"
#include "fewview/parallel.hpp"

namespace fewview {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Analytic scenes.

namespace {

// Smooth 0..1 ramp of the inside-depth d over the shell width w.
double shell_weight(double inside_depth, double falloff) {
  if (falloff <= 0.0) return inside_depth >= 0.0 ? 1.0 : 0.0;
  const double u = std::clamp(inside_depth / falloff, 0.0, 1.0);
  return u * u * (3.0 - 2.0 * u);
}

double primitive_density(const ScenePrimitive& prim, const Vec3& p) {
  double inside_depth;
  if (prim.shape == ScenePrimitive::Shape::kSphere) {
    inside_depth = prim.radius - (p - prim.center).norm();
  } else {
    const Vec3 d = prim.half_extent - (p - prim.center).cwiseAbs();
    inside_depth = d.minCoeff();
  }
  return prim.density * shell_weight(inside_depth, prim.falloff);
}

}  // namespace

double AnalyticScene::density_at(const Vec3& p) const {
  double sigma = 0.0;
  for (const auto& prim : primitives) sigma += primitive_density(prim, p);
  return sigma;
}

Eigen::Vector3d AnalyticScene::color_at(const Vec3& p) const {
  double sigma = 0.0;
  Eigen::Vector3d mixed = Eigen::Vector3d::Zero();
  for (const auto& prim : primitives) {
    const double s = primitive_density(prim, p);
    sigma += s;
    mixed += s * prim.albedo.cast<double>();
  }
  if (sigma <= 0.0) return Eigen::Vector3d::Zero();
  return mixed / sigma;
}

json AnalyticScene::to_json() const {
  json prims = json::array();
  for (const auto& p : primitives) {
    json j{{"type", p.shape == ScenePrimitive::Shape::kSphere ? "sphere"
                                                              : "box"},
           {"center", {p.center.x(), p.center.y(), p.center.z()}},
           {"density", p.density},
           {"albedo", {p.albedo.x(), p.albedo.y(), p.albedo.z()}},
           {"falloff", p.falloff}};
    if (p.shape == ScenePrimitive::Shape::kSphere) {
      j["radius"] = p.radius;
    } else {
      j["half_extent"] = {p.half_extent.x(), p.half_extent.y(),
                          p.half_extent.z()};
    }
    prims.push_back(std::move(j));
  }
  return {{"primitives", std::move(prims)}};
}

AnalyticScene AnalyticScene::from_json(const json& j) {
  AnalyticScene scene;
  if (!j.contains("primitives") || !j["primitives"].is_array())
    throw SchemaError("scene: missing 'primitives' array");
  for (size_t i = 0; i < j["primitives"].size(); ++i) {
    const auto& jp = j["primitives"][i];
    const std::string at = "primitives[" + std::to_string(i) + "]";
    ScenePrimitive prim;
    const std::string type = jp.value("type", "sphere");
    if (type == "sphere") {
      prim.shape = ScenePrimitive::Shape::kSphere;
      prim.radius = jp.value("radius", 0.5);
    } else if (type == "box") {
      prim.shape = ScenePrimitive::Shape::kBox;
      if (!jp.contains("half_extent"))
        throw SchemaError("scene: " + at + ".half_extent missing");
      for (int a = 0; a < 3; ++a)
        prim.half_extent[a] = jp["half_extent"].at(a).get<double>();
    } else {
      throw SchemaError("scene: " + at + ".type must be sphere or box");
    }
    if (jp.contains("center"))
      for (int a = 0; a < 3; ++a)
        prim.center[a] = jp["center"].at(a).get<double>();
    prim.density = jp.value("density", 10.0);
    if (jp.contains("albedo"))
      for (int a = 0; a < 3; ++a)
        prim.albedo[a] = jp["albedo"].at(a).get<float>();
    prim.falloff = jp.value("falloff", 0.1);
    if (prim.density < 0.0)
      throw SchemaError("scene: " + at + ".density must be >= 0");
    scene.primitives.push_back(prim);
  }
  return scene;
}

AnalyticScene tri_sphere_scene() {
  AnalyticScene scene;
  ScenePrimitive a;
  a.center = Vec3(0.45, 0.0, -0.15);
  a.radius = 0.52;
  a.density = 24.0;
  a.albedo = {0.85f, 0.25f, 0.20f};
  ScenePrimitive b;
  b.center = Vec3(-0.40, 0.42, 0.10);
  b.radius = 0.40;
  b.density = 20.0;
  b.albedo = {0.20f, 0.65f, 0.90f};
  ScenePrimitive c;
  c.center = Vec3(-0.05, -0.48, 0.32);
  c.radius = 0.30;
  c.density = 28.0;
  c.albedo = {0.95f, 0.80f, 0.25f};
  scene.primitives = {a, b, c};
  return scene;
}

AnalyticScene single_sphere_scene() {
  AnalyticScene scene;
  ScenePrimitive s;
  s.center = Vec3::Zero();
  s.radius = 0.6;
  s.density = 18.0;
  s.albedo = {0.9f, 0.35f, 0.15f};
  scene.primitives = {s};
  return scene;
}

AnalyticScene make_scene(const std::string& name) {
  if (name == "tri-sphere") return tri_sphere_scene();
  if (name == "single-sphere") return single_sphere_scene();
  throw SchemaError("unknown analytic scene '" + name + "'");
}

// ---------------------------------------------------------------------------
// Datasets and manifests.

void SceneDataset::validate() const {
  for (size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    f.camera.validate();
    if (f.image.width != f.camera.width || f.image.height != f.camera.height)
      throw ShapeMismatch("dataset: frame " + std::to_string(i) +
                          " image/camera size mismatch");
    if (f.camera.width != width() || f.camera.height != height())
      throw ShapeMismatch("dataset: frame " + std::to_string(i) +
                          " size differs from frame 0");
  }
}

namespace {

Pose pose_from_matrix(const json& m, const std::string& at) {
  if (!m.is_array() || m.size() < 3)
    throw SchemaError(at + ": transform_matrix must be a 4x4 array");
  Pose pose;
  for (int r = 0; r < 3; ++r) {
    if (!m[r].is_array() || m[r].size() != 4)
      throw SchemaError(at + "[" + std::to_string(r) + "]: need 4 entries");
    for (int c = 0; c < 3; ++c) pose.rotation(r, c) = m[r][c].get<double>();
    pose.translation[r] = m[r][3].get<double>();
  }
  return pose;
}

json matrix_from_pose(const Pose& pose) {
  json m = json::array();
  for (int r = 0; r < 3; ++r) {
    json row = json::array();
    for (int c = 0; c < 3; ++c) row.push_back(pose.rotation(r, c));
    row.push_back(pose.translation[r]);
    m.push_back(std::move(row));
  }
  m.push_back(json::array({0.0, 0.0, 0.0, 1.0}));
  return m;
}

Split split_from_string(const std::string& s, const std::string& at) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw SchemaError(at + ": split must be 'train' or 'test'");
}

const char* split_to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kTest: return "test";
    default: return "";
  }
}

}  // namespace

SceneDataset load_manifest(const std::string& manifest_path,
                           const Eigen::Vector3f& default_background) {
  if (!fs::exists(manifest_path))
    throw MissingFile("manifest not found: " + manifest_path);
  std::ifstream in(manifest_path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("manifest parse error: ") + e.what());
  }

  SceneDataset ds;
  if (!j.contains("camera_angle_x") || !j["camera_angle_x"].is_number())
    throw SchemaError("camera_angle_x: missing or not a number");
  ds.camera_angle_x = j["camera_angle_x"].get<double>();
  ds.background = default_background;
  if (j.contains("background"))
    for (int c = 0; c < 3; ++c)
      ds.background[c] = j["background"].at(c).get<float>();
  ds.pseudo = j.value("pseudo", false);
  if (j.contains("metadata")) ds.metadata = j["metadata"];

  if (!j.contains("frames") || !j["frames"].is_array() || j["frames"].empty())
    throw SchemaError("frames: missing or empty");

  const fs::path base = fs::path(manifest_path).parent_path();
  for (size_t i = 0; i < j["frames"].size(); ++i) {
    const auto& jf = j["frames"][i];
    const std::string at = "frames[" + std::to_string(i) + "]";
    if (!jf.contains("file_path"))
      throw SchemaError(at + ".file_path: missing");
    if (!jf.contains("transform_matrix"))
      throw SchemaError(at + ".transform_matrix: missing");

    std::string rel = jf["file_path"].get<std::string>();
    fs::path img_path = base / rel;
    if (!fs::exists(img_path)) img_path = base / (rel + ".png");

    Frame frame;
    frame.name = fs::path(rel).stem().string();
    frame.image = read_png(img_path.string(), ds.background);
    const Pose pose = pose_from_matrix(jf["transform_matrix"], at);
    frame.camera = Camera::from_fov_x(frame.image.width, frame.image.height,
                                      ds.camera_angle_x, pose);
    if (jf.contains("split"))
      frame.split = split_from_string(jf["split"].get<std::string>(), at);
    ds.frames.push_back(std::move(frame));
  }
  ds.validate();
  return ds;
}

std::string write_manifest(const SceneDataset& dataset,
                           const std::string& dir) {
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "images", ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());

  json frames = json::array();
  for (size_t i = 0; i < dataset.frames.size(); ++i) {
    const auto& f = dataset.frames[i];
    std::string name = f.name;
    if (name.empty()) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "r_%03zu", i);
      name = buf;
    }
    write_png((fs::path(dir) / "images" / (name + ".png")).string(), f.image);
    json jf{{"file_path", "./images/" + name},
            {"transform_matrix", matrix_from_pose(f.camera.pose)}};
    if (f.split != Split::kUnassigned) jf["split"] = split_to_string(f.split);
    frames.push_back(std::move(jf));
  }

  json j{{"camera_angle_x", dataset.camera_angle_x},
         {"background",
          {dataset.background.x(), dataset.background.y(),
           dataset.background.z()}},
         {"frames", std::move(frames)}};
  if (dataset.pseudo) j["pseudo"] = true;
  if (!dataset.metadata.is_null()) j["metadata"] = dataset.metadata;

  const std::string manifest_path =
      (fs::path(dir) / "transforms.json").string();
  std::ofstream out(manifest_path);
  if (!out) throw IoError("cannot write " + manifest_path);
  out << j.dump(2) << "\n";
  return manifest_path;
}

std::vector<int> split_indices(int n_frames, int n_train, SplitRule rule) {
  if (n_train < 1 || n_train > n_frames)
    throw NotEnoughFrames("split: n_train=" + std::to_string(n_train) +
                          " out of range for " + std::to_string(n_frames) +
                          " frames");
  std::vector<int> idx(n_train);
  if (rule == SplitRule::kFirstN || n_train == 1) {
    for (int i = 0; i < n_train; ++i) idx[i] = i;
  } else {
    for (int i = 0; i < n_train; ++i)
      idx[i] = static_cast<int>(
          std::llround(double(i) * (n_frames - 1) / (n_train - 1)));
  }
  return idx;
}

std::pair<SceneDataset, SceneDataset> make_sparse_split(
    const SceneDataset& dataset, int n_train, SplitRule rule) {
  const auto idx =
      split_indices(static_cast<int>(dataset.frames.size()), n_train, rule);
  std::vector<bool> is_train(dataset.frames.size(), false);
  for (int i : idx) is_train[i] = true;

  SceneDataset train = dataset, test = dataset;
  train.frames.clear();
  test.frames.clear();
  for (size_t i = 0; i < dataset.frames.size(); ++i) {
    Frame f = dataset.frames[i];
    f.split = is_train[i] ? Split::kTrain : Split::kTest;
    (is_train[i] ? train : test).frames.push_back(std::move(f));
  }
  if (test.frames.empty())
    std::fprintf(stderr,
                 "warning: split leaves an empty test set (n_train == frame "
                 "count)\n");
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Oracle rendering.

Image oracle_render(const AnalyticScene& scene, const Camera& camera,
                    int n_quadrature, double near, double far,
                    const Eigen::Vector3f& background) {
  camera.validate();
  if (n_quadrature < 64)
    throw InvalidBounds("oracle_render: need n_quadrature >= 64");
  Image img(camera.width, camera.height);
  const double h = (far - near) / n_quadrature;
  const Eigen::Vector3d bg = background.cast<double>();

  parallel_chunks(camera.height, 4, [&](int64_t row_begin, int64_t row_end) {
    for (int py = static_cast<int>(row_begin); py < row_end; ++py) {
      for (int px = 0; px < camera.width; ++px) {
        const Ray ray = pixel_ray(camera, px, py);
        double optical_depth = 0.0;
        Eigen::Vector3d emitted = Eigen::Vector3d::Zero();
        for (int k = 0; k < n_quadrature; ++k) {
          const double t = near + (k + 0.5) * h;
          const Vec3 p = ray.origin + t * ray.direction;
          const double sigma = scene.density_at(p);
          if (sigma <= 0.0) continue;
          // Midpoint rule on the attenuated emission integral; tau is
          // advanced to the segment midpoint before weighting.
          const double tau_mid = optical_depth + 0.5 * sigma * h;
          emitted += sigma * h * std::exp(-tau_mid) * scene.color_at(p);
          optical_depth += sigma * h;
        }
        const Eigen::Vector3d pixel =
            emitted + std::exp(-optical_depth) * bg;
        float* out = img.pixel(px, py);
        for (int c = 0; c < 3; ++c)
          out[c] = static_cast<float>(std::clamp(pixel[c], 0.0, 1.0));
      }
    }
  });
  return img;
}

SceneDataset synth_dataset(const AnalyticScene& scene,
                           const SynthConfig& cfg) {
  if (cfg.n_views < 1)
    throw InvalidBounds("synth_dataset: need n_views >= 1");
  const auto cameras = sample_poses_sphere_cap(
      cfg.n_views, cfg.camera_radius, cfg.elevation_deg_min,
      cfg.elevation_deg_max, cfg.seed, cfg.resolution, cfg.resolution,
      cfg.fov_x);

  SceneDataset ds;
  ds.camera_angle_x = cfg.fov_x;
  ds.background = cfg.background;
  ds.metadata = {{"generator", "synth"},
                 {"scene", scene.to_json()},
                 {"seed", cfg.seed},
                 {"oracle_samples", cfg.oracle_samples},
                 {"near", cfg.near},
                 {"far", cfg.far}};
  ds.frames.resize(cameras.size());
  for (size_t i = 0; i < cameras.size(); ++i) {
    Frame& f = ds.frames[i];
    f.camera = cameras[i];
    char buf[16];
    std::snprintf(buf, sizeof(buf), "r_%03zu", i);
    f.name = buf;
    // Quantize up front so in-memory ground truth matches what a disk
    // round trip yields.
    f.image = quantized(oracle_render(scene, cameras[i], cfg.oracle_samples,
                                      cfg.near, cfg.far, cfg.background));
  }
  ds.validate();
  return ds;
}

}  // namespace fewview
