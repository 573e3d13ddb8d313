#pragma once
// Central finite differences, the independent gradient oracle used to check
// the hand-derived backpropagation. Lives in the library so tests can drive
// it, but shares no code with the analytic path.

#include <cmath>
#include <utility>

#include "matner/matrix.hpp"

namespace matner {

// f is a nullary callable returning the scalar loss; it must read `params`
// (typically by reference capture). Each coordinate is perturbed by +/- h in
// place and restored before moving on.
template <typename T, typename F>
Mat<T> finite_diff_gradient(F&& f, Mat<T>& params, T h = T(1e-5)) {
  if (h <= T(0)) throw std::invalid_argument("finite_diff_gradient: h must be positive");
  Mat<T> grad(params.rows, params.cols);
  for (size_t i = 0; i < params.size(); ++i) {
    const T orig = params.data[i];
    params.data[i] = orig + h;
    const T fp = f();
    params.data[i] = orig - h;
    const T fm = f();
    params.data[i] = orig;
    grad.data[i] = (fp - fm) / (T(2) * h);
  }
  return grad;
}

// max_i |a_i - b_i| / max(floor, |a_i|, |b_i|). The floor keeps near-zero
// gradients from inflating the ratio with finite-difference noise.
template <typename T>
double max_relative_error(const Mat<T>& a, const Mat<T>& b, double floor = 1e-4) {
  detail::require_same_shape(a, b, "max_relative_error");
  double worst = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double av = static_cast<double>(a.data[i]);
    const double bv = static_cast<double>(b.data[i]);
    const double denom = std::max({floor, std::abs(av), std::abs(bv)});
    worst = std::max(worst, std::abs(av - bv) / denom);
  }
  return worst;
}

}  // namespace matner
