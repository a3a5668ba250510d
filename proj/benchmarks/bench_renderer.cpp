#include <benchmark/benchmark.h>

#include "fewview/dataset.hpp"
#include "fewview/renderer.hpp"
#include "fewview/rng.hpp"

using namespace fewview;

namespace {

void fill_random(std::vector<float>& sigmas, MatX<float>& colors,
                 std::vector<float>& deltas, uint64_t seed) {
  Rng rng(seed);
  for (auto& s : sigmas) s = 4.0f * rng.uniform_float();
  for (auto& d : deltas) d = 0.05f + 0.1f * rng.uniform_float();
  for (int i = 0; i < colors.cols(); ++i)
    for (int ch = 0; ch < 3; ++ch) colors(ch, i) = rng.uniform_float();
}

}  // namespace

static void bm_composite(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::vector<float> sigmas(n), deltas(n);
  MatX<float> colors(3, n);
  fill_random(sigmas, colors, deltas, 1);
  const Eigen::Vector3f bg(1, 1, 1);
  for (auto _ : state) {
    auto out = composite<float>(sigmas, colors, deltas, bg);
    benchmark::DoNotOptimize(out.pixel_color);
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(bm_composite)->Arg(64)->Arg(256)->Arg(1024);

static void bm_composite_backward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::vector<float> sigmas(n), deltas(n), dsigma(n);
  MatX<float> colors(3, n), dcolors;
  fill_random(sigmas, colors, deltas, 2);
  const Eigen::Vector3f bg(1, 1, 1), up(0.5f, -0.2f, 0.8f);
  for (auto _ : state) {
    composite_backward<float>(sigmas, colors, deltas, bg, up, dsigma,
                              dcolors);
    benchmark::DoNotOptimize(dsigma.data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(bm_composite_backward)->Arg(64)->Arg(256);

static void bm_render_image(benchmark::State& state) {
  AnalyticSceneFieldT<float> field(tri_sphere_scene());
  const auto cams = sample_poses_sphere_cap(1, 4.0, 20, 20, 1, 64, 64, 0.7);
  RenderConfig cfg;
  cfg.n_samples = static_cast<int>(state.range(0));
  for (auto _ : state) {
    Image img = render_image(field, cams[0], cfg);
    benchmark::DoNotOptimize(img.rgb.data());
  }
}
BENCHMARK(bm_render_image)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

static void bm_oracle_render(benchmark::State& state) {
  const AnalyticScene scene = tri_sphere_scene();
  const auto cams = sample_poses_sphere_cap(1, 4.0, 20, 20, 1, 64, 64, 0.7);
  for (auto _ : state) {
    Image img = oracle_render(scene, cams[0], state.range(0));
    benchmark::DoNotOptimize(img.rgb.data());
  }
}
BENCHMARK(bm_oracle_render)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
