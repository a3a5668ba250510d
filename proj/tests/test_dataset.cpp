#include <doctest.h>

#include <filesystem>
#include <set>
#include <fstream>

#include "fewview/dataset.hpp"
#include "fewview/errors.hpp"
#include "test_util.hpp"

using namespace fewview;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("fewview_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

SceneDataset small_synth(uint64_t seed, int views = 3, int res = 24) {
  SynthConfig cfg;
  cfg.n_views = views;
  cfg.resolution = res;
  cfg.seed = seed;
  cfg.oracle_samples = 128;
  return synth_dataset(tri_sphere_scene(), cfg);
}

}  // namespace

TEST_CASE("manifest schema errors") {
  const auto dir = temp_dir("schema");
  CHECK_THROWS_AS(load_manifest((dir / "missing.json").string()), MissingFile);

  {
    std::ofstream out(dir / "empty_frames.json");
    out << R"({"camera_angle_x": 0.7, "frames": []})";
  }
  CHECK_THROWS_AS(load_manifest((dir / "empty_frames.json").string()),
                  SchemaError);

  {
    std::ofstream out(dir / "no_angle.json");
    out << R"({"frames": [{"file_path": "x", "transform_matrix": []}]})";
  }
  CHECK_THROWS_AS(load_manifest((dir / "no_angle.json").string()),
                  SchemaError);

  {
    std::ofstream out(dir / "bad_frame.json");
    out << R"({"camera_angle_x": 0.7, "frames": [{"file_path": "x"}]})";
  }
  try {
    load_manifest((dir / "bad_frame.json").string());
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    // the offending key path is part of the message
    CHECK(std::string(e.what()).find("frames[0].transform_matrix") !=
          std::string::npos);
  }
}

TEST_CASE("manifest round-trip is exact") {
  const auto dir = temp_dir("roundtrip");
  SceneDataset ds = small_synth(3);
  ds.frames[0].split = Split::kTrain;
  ds.frames[1].split = Split::kTest;
  const std::string manifest = write_manifest(ds, dir.string());
  const SceneDataset back = load_manifest(manifest);

  REQUIRE(back.frames.size() == ds.frames.size());
  CHECK(back.camera_angle_x == ds.camera_angle_x);
  CHECK(back.background == ds.background);
  for (size_t i = 0; i < ds.frames.size(); ++i) {
    const auto& a = ds.frames[i];
    const auto& b = back.frames[i];
    CHECK((a.camera.pose.rotation - b.camera.pose.rotation)
              .cwiseAbs()
              .maxCoeff() < 1e-9);
    CHECK((a.camera.pose.translation - b.camera.pose.translation)
              .cwiseAbs()
              .maxCoeff() < 1e-9);
    CHECK(a.camera.focal == doctest::Approx(b.camera.focal).epsilon(1e-12));
    CHECK(a.image.rgb == b.image.rgb);  // bit-exact through 8-bit PNG
    CHECK(a.split == b.split);
  }
}

TEST_CASE("blender-style focal from camera_angle_x") {
  const auto dir = temp_dir("focal");
  SceneDataset ds = small_synth(4);
  ds.camera_angle_x = 0.6911112;
  // fake an 800-wide camera to check the published constant
  const double focal = 0.5 * 800 / std::tan(0.5 * 0.6911112);
  CHECK(focal == doctest::Approx(1111.1110434108123).epsilon(1e-12));
  CHECK(std::abs(focal - 1111.11) < 0.01);
}

TEST_CASE("loader tolerates extra frame keys and appends .png") {
  const auto dir = temp_dir("extra");
  SceneDataset ds = small_synth(5, 2);
  write_manifest(ds, dir.string());
  // Rewrite the manifest with an extra per-frame key (as real exports have).
  std::ifstream in(dir / "transforms.json");
  nlohmann::json j;
  in >> j;
  for (auto& f : j["frames"]) f["rotation"] = 0.5;
  std::ofstream out(dir / "transforms.json");
  out << j.dump(2);
  out.close();
  const SceneDataset back = load_manifest((dir / "transforms.json").string());
  CHECK(back.frames.size() == 2);
}

TEST_CASE("sparse splits") {
  SceneDataset ds = small_synth(7, 10, 16);

  SUBCASE("first-n") {
    const auto idx = split_indices(10, 4, SplitRule::kFirstN);
    CHECK(idx == std::vector<int>{0, 1, 2, 3});
    auto [train, test] = make_sparse_split(ds, 4, SplitRule::kFirstN);
    CHECK(train.frames.size() == 4);
    CHECK(test.frames.size() == 6);
    for (const auto& f : train.frames) CHECK(f.split == Split::kTrain);
    for (const auto& f : test.frames) CHECK(f.split == Split::kTest);
  }

  SUBCASE("uniform takes evenly spaced indices") {
    CHECK(split_indices(9, 3, SplitRule::kUniform) ==
          std::vector<int>{0, 4, 8});
    CHECK(split_indices(10, 5, SplitRule::kUniform) ==
          std::vector<int>{0, 2, 5, 7, 9});
  }

  SUBCASE("split is disjoint and exhaustive") {
    auto [train, test] = make_sparse_split(ds, 3, SplitRule::kUniform);
    CHECK(train.frames.size() + test.frames.size() == ds.frames.size());
    std::set<std::string> names;
    for (const auto& f : train.frames) names.insert(f.name);
    for (const auto& f : test.frames) CHECK(names.count(f.name) == 0);
  }

  SUBCASE("n_train == frame count leaves an empty test set") {
    auto [train, test] = make_sparse_split(ds, 10, SplitRule::kFirstN);
    CHECK(train.frames.size() == 10);
    CHECK(test.frames.empty());
  }

  SUBCASE("too many requested") {
    CHECK_THROWS_AS(make_sparse_split(ds, 11, SplitRule::kFirstN),
                    NotEnoughFrames);
  }
}

TEST_CASE("oracle_render on an empty scene is the background") {
  AnalyticScene empty;
  const auto cams = sample_poses_sphere_cap(1, 4.0, 30, 30, 1, 16, 16, 0.7);
  const Image img =
      oracle_render(empty, cams[0], 64, 2.0, 6.0, {0.3f, 0.2f, 0.1f});
  for (size_t i = 0; i < img.pixel_count(); ++i) {
    CHECK(img.rgb[3 * i + 0] == doctest::Approx(0.3f));
    CHECK(img.rgb[3 * i + 1] == doctest::Approx(0.2f));
    CHECK(img.rgb[3 * i + 2] == doctest::Approx(0.1f));
  }
}

TEST_CASE("oracle_render hard sphere matches the chord transmittance") {
  AnalyticScene scene;
  ScenePrimitive s;
  s.center = Vec3::Zero();
  s.radius = 0.6;
  s.density = 2.0;
  s.falloff = 0.0;  // hard edge
  s.albedo = {0.8f, 0.3f, 0.1f};
  scene.primitives = {s};

  Camera cam = Camera::from_fov_x(33, 33, 0.7,
                                  look_at({0, 0, 4}, {0, 0, 0}, {0, 1, 0}));
  const Image img = oracle_render(scene, cam, 4096);
  // center pixel ray passes through the sphere's diameter
  const double chord = 2 * s.radius;
  const double trans = std::exp(-s.density * chord);
  const float* center = img.pixel(16, 16);
  for (int ch = 0; ch < 3; ++ch) {
    const double expect = s.albedo[ch] * (1 - trans) + 1.0 * trans;
    CHECK(std::abs(center[ch] - expect) < 1e-3);
  }
}

TEST_CASE("oracle_render self-convergence") {
  const AnalyticScene scene = tri_sphere_scene();
  const auto cams = sample_poses_sphere_cap(1, 4.0, 10, 10, 4, 24, 24, 0.7);
  const Image a = oracle_render(scene, cams[0], 2048);
  const Image b = oracle_render(scene, cams[0], 4096);
  float max_err = 0.0f;
  for (size_t i = 0; i < a.rgb.size(); ++i)
    max_err = std::max(max_err, std::abs(a.rgb[i] - b.rgb[i]));
  CHECK(max_err < 1e-3f);
}

TEST_CASE("oracle_render rejects too few quadrature steps") {
  const auto cams = sample_poses_sphere_cap(1, 4.0, 10, 10, 4, 8, 8, 0.7);
  CHECK_THROWS_AS(oracle_render(tri_sphere_scene(), cams[0], 32),
                  InvalidBounds);
}

TEST_CASE("synth_dataset determinism and content") {
  const SceneDataset a = small_synth(0, 5, 32);
  const SceneDataset b = small_synth(0, 5, 32);
  REQUIRE(a.frames.size() == 5);
  for (size_t i = 0; i < a.frames.size(); ++i) {
    CHECK(a.frames[i].image.rgb == b.frames[i].image.rgb);
    CHECK(a.frames[i].camera.pose.translation ==
          b.frames[i].camera.pose.translation);
  }

  // every view sees at least one non-background pixel
  for (const auto& f : a.frames) {
    bool non_bg = false;
    for (size_t i = 0; i < f.image.pixel_count() && !non_bg; ++i)
      non_bg = f.image.rgb[3 * i] < 0.99f || f.image.rgb[3 * i + 1] < 0.99f ||
               f.image.rgb[3 * i + 2] < 0.99f;
    CHECK(non_bg);
  }
}

TEST_CASE("synth_dataset round-trips through the loader") {
  const auto dir = temp_dir("synthrt");
  const SceneDataset ds = small_synth(2, 3, 16);
  const std::string manifest = write_manifest(ds, dir.string());
  const SceneDataset back = load_manifest(manifest);
  REQUIRE(back.frames.size() == ds.frames.size());
  for (size_t i = 0; i < ds.frames.size(); ++i)
    CHECK(back.frames[i].image.rgb == ds.frames[i].image.rgb);
}

TEST_CASE("analytic scene json round trip") {
  const AnalyticScene scene = tri_sphere_scene();
  const AnalyticScene back = AnalyticScene::from_json(scene.to_json());
  REQUIRE(back.primitives.size() == scene.primitives.size());
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const Vec3 p(rng.uniform_in(-1.5, 1.5), rng.uniform_in(-1.5, 1.5),
                 rng.uniform_in(-1.5, 1.5));
    CHECK(scene.density_at(p) == doctest::Approx(back.density_at(p)));
  }
  CHECK_THROWS_AS(make_scene("no-such-scene"), SchemaError);
}

TEST_CASE("box primitives contribute density inside only") {
  AnalyticScene scene;
  ScenePrimitive box;
  box.shape = ScenePrimitive::Shape::kBox;
  box.center = Vec3(0.2, 0, 0);
  box.half_extent = Vec3(0.4, 0.3, 0.2);
  box.density = 5.0;
  box.falloff = 0.0;
  scene.primitives = {box};
  CHECK(scene.density_at({0.2, 0, 0}) == doctest::Approx(5.0));
  CHECK(scene.density_at({0.7, 0, 0}) == 0.0);
  CHECK(scene.density_at({0.2, 0.29, 0.19}) == doctest::Approx(5.0));
  CHECK(scene.density_at({0.2, 0.31, 0}) == 0.0);
}
