#pragma once

#include <Eigen/Core>

#include "fewview/errors.hpp"
#include "fewview/field.hpp"

namespace fewview {

// Mean squared RGB error, averaged over every channel of every pixel in the
// batch so the magnitude is independent of batch size. If grad is non-null
// it receives dL/dpred = 2 (pred - gt) / (3 * batch).
template <typename T>
T reconstruction_loss(const MatX<T>& pred, const MatX<T>& gt,
                      MatX<T>* grad = nullptr) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols())
    throw ShapeMismatch("reconstruction_loss: pred/gt shapes disagree");
  if (!pred.allFinite() || !gt.allFinite())
    throw NonFiniteInput("reconstruction_loss: non-finite input");
  const MatX<T> diff = pred - gt;
  const T inv_count = T(1) / static_cast<T>(diff.size());
  if (grad) *grad = T(2) * inv_count * diff;
  return diff.squaredNorm() * inv_count;
}

}  // namespace fewview
