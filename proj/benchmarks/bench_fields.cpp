#include <benchmark/benchmark.h>

#include "fewview/grid_field.hpp"
#include "fewview/mlp_field.hpp"
#include "fewview/rng.hpp"

using namespace fewview;

namespace {

void random_batch(int n, MatX<float>& pos, MatX<float>& dir, uint64_t seed) {
  Rng rng(seed);
  pos.resize(3, n);
  dir.resize(3, n);
  for (int i = 0; i < n; ++i) {
    pos.col(i) = Eigen::Vector3f(float(rng.uniform_in(-1.5, 1.5)),
                                 float(rng.uniform_in(-1.5, 1.5)),
                                 float(rng.uniform_in(-1.5, 1.5)));
    dir.col(i) = Eigen::Vector3f(float(rng.uniform_in(-1, 1)),
                                 float(rng.uniform_in(-1, 1)),
                                 float(rng.uniform_in(-1, 1)))
                     .normalized();
  }
}

}  // namespace

static void bm_mlp_eval(benchmark::State& state) {
  MlpField field(MlpConfig{});  // default 4x64 network
  const int n = static_cast<int>(state.range(0));
  MatX<float> pos, dir;
  random_batch(n, pos, dir, 1);
  VecX<float> sigma;
  MatX<float> rgb;
  for (auto _ : state) {
    field.eval(pos, dir, sigma, rgb);
    benchmark::DoNotOptimize(sigma.data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(bm_mlp_eval)->Arg(1024)->Arg(8192);

static void bm_mlp_train_step(benchmark::State& state) {
  MlpField field(MlpConfig{});
  const int n = static_cast<int>(state.range(0));
  MatX<float> pos, dir;
  random_batch(n, pos, dir, 2);
  VecX<float> sigma, dsigma = VecX<float>::Ones(n);
  MatX<float> rgb, drgb = MatX<float>::Ones(3, n);
  std::vector<float> grad(field.parameter_count(), 0.0f);
  for (auto _ : state) {
    auto cache = field.eval_cached(pos, dir, sigma, rgb);
    field.backward(*cache, dsigma, drgb, grad);
    benchmark::DoNotOptimize(grad.data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(bm_mlp_train_step)->Arg(8192)->Unit(benchmark::kMillisecond);

static void bm_vm_eval(benchmark::State& state) {
  VmConfig cfg;  // default rank-8, 64^3 bounds
  VmGrid field(cfg);
  const int n = static_cast<int>(state.range(0));
  MatX<float> pos, dir;
  random_batch(n, pos, dir, 3);
  VecX<float> sigma;
  MatX<float> rgb;
  for (auto _ : state) {
    field.eval(pos, dir, sigma, rgb);
    benchmark::DoNotOptimize(sigma.data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(bm_vm_eval)->Arg(1024)->Arg(8192);

static void bm_vm_train_step(benchmark::State& state) {
  VmConfig cfg;
  VmGrid field(cfg);
  const int n = static_cast<int>(state.range(0));
  MatX<float> pos, dir;
  random_batch(n, pos, dir, 4);
  VecX<float> sigma, dsigma = VecX<float>::Ones(n);
  MatX<float> rgb, drgb = MatX<float>::Ones(3, n);
  std::vector<float> grad(field.parameter_count(), 0.0f);
  for (auto _ : state) {
    auto cache = field.eval_cached(pos, dir, sigma, rgb);
    field.backward(*cache, dsigma, drgb, grad);
    benchmark::DoNotOptimize(grad.data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(bm_vm_train_step)->Arg(8192)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
