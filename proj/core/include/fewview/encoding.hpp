#pragma once

#include <Eigen/Core>
#include <cassert>
#include <cmath>
#include <span>
#include <vector>

#include "fewview/errors.hpp"

namespace fewview {

struct EncodingConfig {
  int l_pos = 8;                 // frequency bands for positions
  int l_dir = 2;                 // frequency bands for view directions
  bool include_identity = true;  // prepend the raw input

  int pos_dim(int input_dim = 3) const {
    return input_dim * ((include_identity ? 1 : 0) + 2 * l_pos);
  }
  int dir_dim(int input_dim = 3) const {
    return input_dim * ((include_identity ? 1 : 0) + 2 * l_dir);
  }
};

// Per-band ramp weights at training step t. Band k carries
// clamp(L * t / ramp_steps - k, 0, 1): band 0 opens first, the highest band
// last, everything is fully open from t >= ramp_steps on.
template <typename T>
std::vector<T> frequency_mask(int t, int ramp_steps, int bands) {
  assert(ramp_steps >= 1 && bands >= 0);
  std::vector<T> mask(bands);
  const double progress = double(bands) * double(t) / double(ramp_steps);
  for (int k = 0; k < bands; ++k)
    mask[k] = static_cast<T>(std::clamp(progress - k, 0.0, 1.0));
  return mask;
}

// Linear ramp state for stage-1 training; all-ones once past ramp_steps.
struct FrequencySchedule {
  int ramp_steps = 1;
  int current_step = 0;

  template <typename T>
  std::vector<T> mask(int bands) const {
    return frequency_mask<T>(current_step, ramp_steps, bands);
  }
};

// Sinusoidal encoding of a batch of vectors (one column per sample):
//   out = [x (if identity); m_0 sin(2^0 pi x); m_0 cos(2^0 pi x); ...
//          m_{L-1} sin(2^{L-1} pi x); m_{L-1} cos(2^{L-1} pi x)]
// mask holds one weight per band and must have length `bands`.
template <typename T>
void positional_encoding(
    const Eigen::Ref<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>>& x,
    int bands, bool include_identity, std::span<const T> mask,
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& out) {
  if (static_cast<int>(mask.size()) != bands)
    throw MaskLengthMismatch("positional_encoding: mask length " +
                             std::to_string(mask.size()) + " != bands " +
                             std::to_string(bands));
  const Eigen::Index dim = x.rows();
  const Eigen::Index n = x.cols();
  const Eigen::Index id_rows = include_identity ? dim : 0;
  out.resize(id_rows + 2 * bands * dim, n);
  if (include_identity) out.topRows(dim) = x;
  for (int k = 0; k < bands; ++k) {
    const T freq = static_cast<T>(std::ldexp(M_PI, k));  // 2^k * pi
    const T m = mask[k];
    auto sin_block = out.middleRows(id_rows + 2 * k * dim, dim);
    auto cos_block = out.middleRows(id_rows + (2 * k + 1) * dim, dim);
    sin_block = (x.array() * freq).sin() * m;
    cos_block = (x.array() * freq).cos() * m;
  }
}

template <typename T>
Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> positional_encoding(
    const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& x, int bands,
    bool include_identity, std::span<const T> mask) {
  Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> out;
  positional_encoding<T>(x, bands, include_identity, mask, out);
  return out;
}

// Unmasked convenience overload.
template <typename T>
Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> positional_encoding(
    const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>& x, int bands,
    bool include_identity) {
  std::vector<T> ones(bands, T(1));
  return positional_encoding<T>(x, bands, include_identity,
                                std::span<const T>(ones));
}

}  // namespace fewview
