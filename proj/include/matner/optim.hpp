#pragma once
// Adam with bias correction, one state per parameter tensor, plus the
// global-norm gradient clip used by the training loop.

#include <cmath>
#include <cstdint>
#include <vector>

#include "matner/matrix.hpp"

namespace matner {

template <typename T = double>
struct AdamState {
  Mat<T> m;  // first moment, same shape as the tracked parameter
  Mat<T> v;  // second moment
  int64_t t = 0;
  T lr = T(0.001);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);

  static AdamState for_param(const Mat<T>& p, T lr = T(0.001), T beta1 = T(0.9),
                             T beta2 = T(0.999), T eps = T(1e-8)) {
    AdamState s;
    s.m = Mat<T>(p.rows, p.cols);
    s.v = Mat<T>(p.rows, p.cols);
    s.lr = lr;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps = eps;
    return s;
  }
};

template <typename T>
void adam_step(Mat<T>& params, const Mat<T>& grads, AdamState<T>& state) {
  detail::require_same_shape(params, grads, "adam_step");
  detail::require_same_shape(params, state.m, "adam_step (moment m)");
  state.t += 1;
  const T bc1 = T(1) - std::pow(state.beta1, static_cast<T>(state.t));
  const T bc2 = T(1) - std::pow(state.beta2, static_cast<T>(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    const T g = grads.data[i];
    state.m.data[i] = state.beta1 * state.m.data[i] + (T(1) - state.beta1) * g;
    state.v.data[i] = state.beta2 * state.v.data[i] + (T(1) - state.beta2) * g * g;
    const T mhat = state.m.data[i] / bc1;
    const T vhat = state.v.data[i] / bc2;
    params.data[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

template <typename T>
double global_norm(const std::vector<const Mat<T>*>& tensors) {
  double sq = 0;
  for (const Mat<T>* t : tensors)
    for (T v : t->data) sq += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(sq);
}

// Scales every tensor by max_norm / norm when the global norm exceeds
// max_norm. max_norm <= 0 disables clipping.
template <typename T>
void clip_global_norm(std::vector<Mat<T>*>& tensors, double max_norm) {
  if (max_norm <= 0) return;
  std::vector<const Mat<T>*> view(tensors.begin(), tensors.end());
  const double norm = global_norm(view);
  if (norm <= max_norm || norm == 0) return;
  const T s = static_cast<T>(max_norm / norm);
  for (Mat<T>* t : tensors) scale_inplace(*t, s);
}

}  // namespace matner
