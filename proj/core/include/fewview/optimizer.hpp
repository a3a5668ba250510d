#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "fewview/errors.hpp"

namespace fewview {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a flat parameter vector. An optional per-parameter
// learning-rate scale lets grid factors and their decoder train at different
// speeds without a second optimizer instance.
template <typename T>
class AdamT {
 public:
  AdamT(size_t n_params, const AdamConfig& cfg)
      : cfg_(cfg), m_(n_params, T(0)), v_(n_params, T(0)) {}

  AdamT(size_t n_params, const AdamConfig& cfg, std::vector<T> lr_scales)
      : AdamT(n_params, cfg) {
    if (!lr_scales.empty() && lr_scales.size() != n_params)
      throw ShapeMismatch("adam: lr scale length != parameter count");
    lr_scales_ = std::move(lr_scales);
  }

  int64_t step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

  void step(std::span<T> params, std::span<const T> grads) {
    step(params, grads, cfg_.lr);
  }

  // lr overrides the configured rate for this step (schedules live in the
  // caller); moments always decay by beta regardless of the gradient.
  void step(std::span<T> params, std::span<const T> grads, double lr) {
    if (params.size() != m_.size() || grads.size() != m_.size())
      throw ShapeMismatch("adam: parameter/gradient shapes disagree");
    ++step_;
    const T b1 = static_cast<T>(cfg_.beta1);
    const T b2 = static_cast<T>(cfg_.beta2);
    const T inv_bc1 = T(1) / (T(1) - static_cast<T>(std::pow(cfg_.beta1, step_)));
    const T inv_bc2 = T(1) / (T(1) - static_cast<T>(std::pow(cfg_.beta2, step_)));
    const T eps = static_cast<T>(cfg_.eps);
    for (size_t i = 0; i < m_.size(); ++i) {
      const T g = grads[i];
      m_[i] = b1 * m_[i] + (T(1) - b1) * g;
      v_[i] = b2 * v_[i] + (T(1) - b2) * g * g;
      const T m_hat = m_[i] * inv_bc1;
      const T v_hat = v_[i] * inv_bc2;
      const T scale = lr_scales_.empty() ? T(1) : lr_scales_[i];
      params[i] -= static_cast<T>(lr) * scale * m_hat /
                   (std::sqrt(v_hat) + eps);
    }
  }

  void reset() {
    std::fill(m_.begin(), m_.end(), T(0));
    std::fill(v_.begin(), v_.end(), T(0));
    step_ = 0;
  }

 private:
  AdamConfig cfg_;
  std::vector<T> m_, v_;
  std::vector<T> lr_scales_;
  int64_t step_ = 0;
};

using Adam = AdamT<float>;

}  // namespace fewview
