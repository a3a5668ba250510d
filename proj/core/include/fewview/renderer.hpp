#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "fewview/errors.hpp"
#include "fewview/field.hpp"
#include "fewview/geometry.hpp"
#include "fewview/image.hpp"
#include "fewview/parallel.hpp"
#include "fewview/rng.hpp"

namespace fewview {

enum class JitterMode {
  kMidpoint,    // every stratum sampled at its midpoint; deterministic
  kStratified,  // uniform offset per stratum, seeded per pixel
};

struct RenderConfig {
  double near = 2.0;
  double far = 6.0;
  int n_samples = 64;
  Eigen::Vector3f background{1.0f, 1.0f, 1.0f};
  JitterMode jitter = JitterMode::kMidpoint;
  uint64_t jitter_seed = 0;
};

// Depth samples for a batch of rays. Column s + r * n_samples holds sample
// s of ray r; positions are exactly origin + t * direction.
template <typename T>
struct SampleBatchT {
  int n_rays = 0;
  int n_samples = 0;
  MatX<T> t_values;    // n_samples x n_rays
  MatX<T> deltas;      // n_samples x n_rays, last entry capped
  MatX<T> positions;   // 3 x (n_rays * n_samples)
  MatX<T> directions;  // 3 x (n_rays * n_samples)
};

template <typename T>
struct CompositeOutputT {
  Eigen::Matrix<T, 3, 1> pixel_color;
  std::vector<T> weights;      // w_i = T_i * alpha_i
  T residual_transmittance{};  // T_{N+1}

  T expected_depth(std::span<const T> t_values) const {
    T depth = 0;
    for (size_t i = 0; i < weights.size(); ++i) depth += weights[i] * t_values[i];
    return depth;
  }
};

namespace detail {

// Fills t (n) and deltas (n) for one ray given one uniform draw per stratum.
// Depth k falls in [near + k*h, near + (k+1)*h); the final delta is capped
// at the bin width h so gradients stay bounded.
template <typename T>
void stratified_depths(double near, double far, int n,
                       std::span<const T> draws, T* t, T* deltas) {
  const double h = (far - near) / n;
  for (int k = 0; k < n; ++k)
    t[k] = static_cast<T>(near + (k + static_cast<double>(draws[k])) * h);
  for (int k = 0; k + 1 < n; ++k) deltas[k] = t[k + 1] - t[k];
  deltas[n - 1] = static_cast<T>(h);
}

}  // namespace detail

// Stratified depth samples along one ray: one depth per stratum, placed by
// the caller-provided uniforms in [0,1) (no hidden RNG).
template <typename T>
SampleBatchT<T> stratified_samples(const Ray& ray, double near, double far,
                                   int n, std::span<const T> rng_draws) {
  if (!(near >= 0.0) || !(near < far))
    throw InvalidBounds("stratified_samples: need 0 <= near < far");
  if (n < 2) throw InvalidBounds("stratified_samples: need n >= 2");
  if (static_cast<int>(rng_draws.size()) != n)
    throw ShapeMismatch("stratified_samples: need one draw per stratum");

  SampleBatchT<T> batch;
  batch.n_rays = 1;
  batch.n_samples = n;
  batch.t_values.resize(n, 1);
  batch.deltas.resize(n, 1);
  detail::stratified_depths<T>(near, far, n, rng_draws,
                               batch.t_values.data(), batch.deltas.data());
  batch.positions.resize(3, n);
  batch.directions.resize(3, n);
  const Eigen::Matrix<T, 3, 1> o = ray.origin.cast<T>();
  const Eigen::Matrix<T, 3, 1> d = ray.direction.cast<T>();
  for (int k = 0; k < n; ++k) {
    batch.positions.col(k) = o + batch.t_values(k, 0) * d;
    batch.directions.col(k) = d;
  }
  return batch;
}

// Discrete volume compositing over one ray:
//   alpha_i = 1 - exp(-sigma_i * delta_i),  T_1 = 1,
//   T_{i+1} = T_i * exp(-sigma_i * delta_i),
//   pixel = sum_i T_i alpha_i c_i + T_{N+1} * background.
template <typename T>
CompositeOutputT<T> composite(std::span<const T> sigmas,
                              const Eigen::Ref<const MatX<T>>& colors,
                              std::span<const T> deltas,
                              const Eigen::Matrix<T, 3, 1>& background) {
  const size_t n = sigmas.size();
  if (deltas.size() != n || static_cast<size_t>(colors.cols()) != n ||
      colors.rows() != 3)
    throw ShapeMismatch("composite: sigmas/colors/deltas disagree");
  CompositeOutputT<T> out;
  out.weights.resize(n);
  out.pixel_color.setZero();
  T transmittance = T(1);
  for (size_t i = 0; i < n; ++i) {
    if (!std::isfinite(static_cast<double>(sigmas[i])) || sigmas[i] < T(0))
      throw NonFiniteInput("composite: densities must be finite and >= 0");
    const T attenuation = std::exp(-sigmas[i] * deltas[i]);
    const T weight = transmittance * (T(1) - attenuation);
    out.weights[i] = weight;
    out.pixel_color += weight * colors.col(i);
    transmittance *= attenuation;
  }
  out.residual_transmittance = transmittance;
  out.pixel_color += transmittance * background;
  return out;
}

// Analytic adjoint of composite(). With S_i = sum_{j>i} w_j c_j + T_{N+1} bg:
//   dL/dc_i     = w_i * upstream
//   dL/dsigma_i = delta_i * (T_{i+1} * (upstream . c_i) - upstream . S_i)
// since raising sigma_i boosts sample i's own contribution (at the post-i
// transmittance T_{i+1}) and attenuates everything behind it.
template <typename T>
void composite_backward(std::span<const T> sigmas,
                        const Eigen::Ref<const MatX<T>>& colors,
                        std::span<const T> deltas,
                        const Eigen::Matrix<T, 3, 1>& background,
                        const Eigen::Matrix<T, 3, 1>& upstream,
                        std::span<T> dsigmas, MatX<T>& dcolors) {
  const size_t n = sigmas.size();
  if (deltas.size() != n || static_cast<size_t>(colors.cols()) != n ||
      colors.rows() != 3 || dsigmas.size() != n)
    throw ShapeMismatch("composite_backward: shapes disagree");
  dcolors.resize(3, n);

  // Forward sweep for transmittances.
  std::vector<T> trans(n + 1);
  trans[0] = T(1);
  for (size_t i = 0; i < n; ++i)
    trans[i + 1] = trans[i] * std::exp(-sigmas[i] * deltas[i]);

  // Reverse sweep: suffix of upstream-projected downstream radiance.
  T suffix = trans[n] * upstream.dot(background);
  for (size_t idx = n; idx-- > 0;) {
    const T weight = trans[idx] - trans[idx + 1];
    dcolors.col(idx) = weight * upstream;
    dsigmas[idx] =
        deltas[idx] * (trans[idx + 1] * upstream.dot(colors.col(idx)) - suffix);
    suffix += weight * upstream.dot(colors.col(idx));
  }
}

// Renders camera pixels by compositing field samples along per-pixel rays.
// Deterministic (bitwise) under kMidpoint jitter; under kStratified the
// draws are seeded per pixel, so the result is independent of tiling and
// thread count. Field evaluation errors propagate.
template <typename T>
Image render_image(const RadianceFieldT<T>& field, const Camera& camera,
                   const RenderConfig& cfg) {
  camera.validate();
  if (!(cfg.near >= 0.0) || !(cfg.near < cfg.far))
    throw InvalidBounds("render_image: need 0 <= near < far");
  if (cfg.n_samples < 2)
    throw InvalidBounds("render_image: need n_samples >= 2");

  Image img(camera.width, camera.height);
  const Eigen::Matrix<T, 3, 1> bg = cfg.background.cast<T>();
  const int n = cfg.n_samples;

  // Row-block tiles keep the per-call batch large enough for GEMM-backed
  // fields while bounding per-worker scratch memory.
  const int rows_per_tile = std::max(1, 16384 / (camera.width * n) + 1);
  parallel_chunks(camera.height, rows_per_tile, [&](int64_t row_begin,
                                                    int64_t row_end) {
    const int rows = static_cast<int>(row_end - row_begin);
    const int rays = rows * camera.width;
    MatX<T> positions(3, size_t(rays) * n), directions(3, size_t(rays) * n);
    MatX<T> t_values(n, rays), deltas(n, rays);
    std::vector<T> draws(n);

    int ray_idx = 0;
    for (int py = static_cast<int>(row_begin); py < row_end; ++py) {
      for (int px = 0; px < camera.width; ++px, ++ray_idx) {
        const Ray ray = pixel_ray(camera, px, py);
        if (cfg.jitter == JitterMode::kMidpoint) {
          std::fill(draws.begin(), draws.end(), T(0.5));
        } else {
          Rng pixel_rng(cfg.jitter_seed ^
                        (0x9e3779b97f4a7c15ULL *
                         (uint64_t(py) * camera.width + px + 1)));
          for (int k = 0; k < n; ++k) draws[k] = static_cast<T>(pixel_rng.uniform());
        }
        detail::stratified_depths<T>(cfg.near, cfg.far, n,
                                     std::span<const T>(draws),
                                     t_values.col(ray_idx).data(),
                                     deltas.col(ray_idx).data());
        const Eigen::Matrix<T, 3, 1> o = ray.origin.cast<T>();
        const Eigen::Matrix<T, 3, 1> d = ray.direction.cast<T>();
        for (int k = 0; k < n; ++k) {
          const int col = ray_idx * n + k;
          positions.col(col) = o + t_values(k, ray_idx) * d;
          directions.col(col) = d;
        }
      }
    }

    VecX<T> sigma;
    MatX<T> rgb;
    field.eval(positions, directions, sigma, rgb);

    ray_idx = 0;
    for (int py = static_cast<int>(row_begin); py < row_end; ++py) {
      for (int px = 0; px < camera.width; ++px, ++ray_idx) {
        const auto out = composite<T>(
            std::span<const T>(sigma.data() + size_t(ray_idx) * n, n),
            rgb.middleCols(size_t(ray_idx) * n, n),
            std::span<const T>(deltas.col(ray_idx).data(), n), bg);
        float* px_out = img.pixel(px, py);
        for (int c = 0; c < 3; ++c)
          px_out[c] = std::clamp(static_cast<float>(out.pixel_color[c]), 0.0f,
                                 1.0f);
      }
    }
  });
  return img;
}

}  // namespace fewview
