#pragma once

#include <Eigen/Core>
#include <memory>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

namespace fewview {

template <typename T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// Opaque forward-pass state handed back to the field that produced it.
template <typename T>
struct FieldCacheT {
  virtual ~FieldCacheT() = default;
};

// A radiance field maps batches of (position, direction) columns to
// (density sigma >= 0, color in [0,1]^3) and can push gradients from its
// outputs back onto a flat parameter vector. Evaluation is const and safe
// to run concurrently; parameter mutation has a single writer (the trainer)
// between evaluation phases.
template <typename T>
class RadianceFieldT {
 public:
  using Mat = MatX<T>;
  using Vec = VecX<T>;

  virtual ~RadianceFieldT() = default;

  virtual std::string kind() const = 0;

  // Flat parameter storage; empty for parameter-free fields.
  virtual std::span<T> parameters() = 0;
  virtual std::span<const T> parameters() const = 0;
  size_t parameter_count() const { return parameters().size(); }

  // Per-parameter learning-rate multipliers; empty means all ones.
  virtual std::vector<T> lr_scales() const { return {}; }

  // positions/directions: 3 x N column batches. Fills sigma (N) and
  // rgb (3 x N).
  virtual void eval(const Mat& positions, const Mat& directions, Vec& sigma,
                    Mat& rgb) const = 0;

  // Cache object this field's eval_with_cache can fill. Reusing one cache
  // across calls avoids reallocating the activation buffers every step.
  virtual std::unique_ptr<FieldCacheT<T>> make_cache() const = 0;

  // Like eval but records the activations backward() needs into `cache`
  // (which must come from this field's make_cache).
  virtual void eval_with_cache(const Mat& positions, const Mat& directions,
                               Vec& sigma, Mat& rgb,
                               FieldCacheT<T>& cache) const = 0;

  // Convenience: fresh cache + eval_with_cache.
  std::unique_ptr<FieldCacheT<T>> eval_cached(const Mat& positions,
                                              const Mat& directions,
                                              Vec& sigma, Mat& rgb) const {
    auto cache = make_cache();
    eval_with_cache(positions, directions, sigma, rgb, *cache);
    return cache;
  }

  // Accumulates dL/dparams into grad (same length as parameters()) given
  // upstream gradients w.r.t. this field's outputs. The cache must come
  // from this field's eval_cached; otherwise CacheMismatch is thrown.
  virtual void backward(const FieldCacheT<T>& cache, const Vec& dsigma,
                        const Mat& drgb, std::span<T> grad) const = 0;

  // Training-progress hook; fields with a frequency ramp update their mask
  // here. Default: no-op.
  virtual void set_train_progress(int /*step*/, int /*total_steps*/) {}

  // Architecture block for checkpoints; must be enough to rebuild the field
  // (minus parameter values) via make_field().
  virtual nlohmann::json describe() const = 0;
};

using RadianceField = RadianceFieldT<float>;
using FieldCache = FieldCacheT<float>;

}  // namespace fewview
