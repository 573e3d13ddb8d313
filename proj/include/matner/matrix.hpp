#pragma once
// Dense row-major matrix plus the activation / loss / init primitives the
// tagger is built from. Double precision by default; the whole numeric stack
// is templated on the scalar so a single-precision build stays possible.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "matner/common.hpp"
#include "matner/rng.hpp"

namespace matner {

template <typename T = double>
struct Mat {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<T> data;  // row-major, data.size() == rows * cols

  Mat() = default;
  Mat(int64_t r, int64_t c, T fill = T(0)) {
    if (r < 0 || c < 0) throw std::invalid_argument("Mat: negative dimension " + shape_str(r, c));
    rows = r;
    cols = c;
    data.assign(static_cast<size_t>(r) * static_cast<size_t>(c), fill);
  }

  T& operator()(int64_t i, int64_t j) { return data[static_cast<size_t>(i * cols + j)]; }
  const T& operator()(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * cols + j)]; }

  T* row(int64_t i) { return data.data() + i * cols; }
  const T* row(int64_t i) const { return data.data() + i * cols; }

  size_t size() const { return data.size(); }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
  std::string shape() const { return shape_str(rows, cols); }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  bool operator==(const Mat& o) const { return rows == o.rows && cols == o.cols && data == o.data; }
};

using Matrix = Mat<double>;

namespace detail {
template <typename T>
inline void require_same_shape(const Mat<T>& a, const Mat<T>& b, const char* op) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape() + " vs " + b.shape());
}
}  // namespace detail

// c = a * b
template <typename T>
Mat<T> matmul(const Mat<T>& a, const Mat<T>& b) {
  if (a.cols != b.rows)
    throw DimensionError("matmul: inner dimensions disagree: " + a.shape() + " x " + b.shape());
  Mat<T> c(a.rows, b.cols);
  for (int64_t i = 0; i < a.rows; ++i) {
    const T* arow = a.row(i);
    T* crow = c.row(i);
    for (int64_t k = 0; k < a.cols; ++k) {
      const T aik = arow[k];
      if (aik == T(0)) continue;
      const T* brow = b.row(k);
      for (int64_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

// c += a * b
template <typename T>
void matmul_acc(Mat<T>& c, const Mat<T>& a, const Mat<T>& b) {
  if (a.cols != b.rows)
    throw DimensionError("matmul_acc: inner dimensions disagree: " + a.shape() + " x " + b.shape());
  if (c.rows != a.rows || c.cols != b.cols)
    throw DimensionError("matmul_acc: output shape " + c.shape() + " does not fit " + a.shape() +
                         " x " + b.shape());
  for (int64_t i = 0; i < a.rows; ++i) {
    const T* arow = a.row(i);
    T* crow = c.row(i);
    for (int64_t k = 0; k < a.cols; ++k) {
      const T aik = arow[k];
      if (aik == T(0)) continue;
      const T* brow = b.row(k);
      for (int64_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
}

// c += a^T * b   (a: n x r, b: n x c  ->  r x c)
template <typename T>
void matmul_at_b_acc(Mat<T>& c, const Mat<T>& a, const Mat<T>& b) {
  if (a.rows != b.rows)
    throw DimensionError("matmul_at_b_acc: row counts disagree: " + a.shape() + " vs " + b.shape());
  if (c.rows != a.cols || c.cols != b.cols)
    throw DimensionError("matmul_at_b_acc: output shape " + c.shape() + " does not fit");
  for (int64_t n = 0; n < a.rows; ++n) {
    const T* arow = a.row(n);
    const T* brow = b.row(n);
    for (int64_t i = 0; i < a.cols; ++i) {
      const T ani = arow[i];
      if (ani == T(0)) continue;
      T* crow = c.row(i);
      for (int64_t j = 0; j < b.cols; ++j) crow[j] += ani * brow[j];
    }
  }
}

// c = a * b^T   (a: n x k, b: m x k  ->  n x m)
template <typename T>
Mat<T> matmul_a_bt(const Mat<T>& a, const Mat<T>& b) {
  if (a.cols != b.cols)
    throw DimensionError("matmul_a_bt: column counts disagree: " + a.shape() + " vs " + b.shape());
  Mat<T> c(a.rows, b.rows);
  for (int64_t i = 0; i < a.rows; ++i) {
    const T* arow = a.row(i);
    T* crow = c.row(i);
    for (int64_t j = 0; j < b.rows; ++j) {
      const T* brow = b.row(j);
      T acc = 0;
      for (int64_t k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
      crow[j] = acc;
    }
  }
  return c;
}

template <typename T>
Mat<T> transpose(const Mat<T>& a) {
  Mat<T> t(a.cols, a.rows);
  for (int64_t i = 0; i < a.rows; ++i)
    for (int64_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  return t;
}

template <typename T>
void add_inplace(Mat<T>& a, const Mat<T>& b) {
  detail::require_same_shape(a, b, "add");
  for (size_t i = 0; i < a.size(); ++i) a.data[i] += b.data[i];
}

template <typename T>
void hadamard_inplace(Mat<T>& a, const Mat<T>& b) {
  detail::require_same_shape(a, b, "hadamard");
  for (size_t i = 0; i < a.size(); ++i) a.data[i] *= b.data[i];
}

template <typename T>
void scale_inplace(Mat<T>& a, T s) {
  for (T& v : a.data) v *= s;
}

// Saturating sigmoid; never NaN, exact 0/1 in deep saturation.
template <typename T>
T sigmoid_scalar(T x) {
  if (x >= T(0)) {
    const T z = std::exp(-x);
    return T(1) / (T(1) + z);
  }
  const T z = std::exp(x);
  return z / (T(1) + z);
}

template <typename T>
Mat<T> sigmoid(const Mat<T>& x) {
  Mat<T> y(x.rows, x.cols);
  for (size_t i = 0; i < x.size(); ++i) y.data[i] = sigmoid_scalar(x.data[i]);
  return y;
}

template <typename T>
Mat<T> tanh(const Mat<T>& x) {
  Mat<T> y(x.rows, x.cols);
  for (size_t i = 0; i < x.size(); ++i) y.data[i] = std::tanh(x.data[i]);
  return y;
}

// Max-subtracted softmax over a logit vector.
template <typename T>
std::vector<T> softmax(const std::vector<T>& logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  const T mx = *std::max_element(logits.begin(), logits.end());
  std::vector<T> out(logits.size());
  T sum = 0;
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (T& v : out) v /= sum;
  return out;
}

// In-place row-wise softmax.
template <typename T>
void softmax_rows_inplace(Mat<T>& m) {
  if (m.cols == 0) throw std::invalid_argument("softmax: empty rows");
  for (int64_t i = 0; i < m.rows; ++i) {
    T* r = m.row(i);
    T mx = r[0];
    for (int64_t j = 1; j < m.cols; ++j) mx = std::max(mx, r[j]);
    T sum = 0;
    for (int64_t j = 0; j < m.cols; ++j) {
      r[j] = std::exp(r[j] - mx);
      sum += r[j];
    }
    for (int64_t j = 0; j < m.cols; ++j) r[j] /= sum;
  }
}

inline constexpr double kProbClamp = 1e-12;

namespace detail {
template <typename T>
inline int64_t one_hot_index(const Mat<T>& target, int64_t row) {
  int64_t hot = -1;
  for (int64_t j = 0; j < target.cols; ++j) {
    const T v = target(row, j);
    if (v == T(1)) {
      if (hot >= 0) return -1;  // two ones
      hot = j;
    } else if (v != T(0)) {
      return -1;
    }
  }
  return hot;  // -1 when no 1 found
}
}  // namespace detail

// Mean over rows of -ln(p_true); rows of `target` must be one-hot; p is
// clamped to [1e-12, 1] so a confidently wrong prediction stays finite.
// `row_included` (optional) restricts the mean to the selected rows.
template <typename T>
T categorical_cross_entropy(const Mat<T>& predicted, const Mat<T>& target,
                            const std::vector<uint8_t>* row_included = nullptr) {
  detail::require_same_shape(predicted, target, "categorical_cross_entropy");
  if (row_included && static_cast<int64_t>(row_included->size()) != predicted.rows)
    throw DimensionError("categorical_cross_entropy: mask length " +
                         std::to_string(row_included->size()) + " vs rows " +
                         std::to_string(predicted.rows));
  T total = 0;
  int64_t n = 0;
  for (int64_t i = 0; i < predicted.rows; ++i) {
    if (row_included && !(*row_included)[static_cast<size_t>(i)]) continue;
    const int64_t hot = detail::one_hot_index(target, i);
    if (hot < 0)
      throw std::invalid_argument("categorical_cross_entropy: target row " + std::to_string(i) +
                                  " is not one-hot");
    const T p = std::clamp(predicted(i, hot), static_cast<T>(kProbClamp), T(1));
    total += -std::log(p);
    ++n;
  }
  if (n == 0) throw std::invalid_argument("categorical_cross_entropy: no rows included");
  return total / static_cast<T>(n);
}

// Entries i.i.d. uniform in +/- sqrt(6 / (rows + cols)).
template <typename T = double>
Mat<T> glorot_uniform_init(Rng& rng, int64_t rows, int64_t cols) {
  if (rows < 1 || cols < 1)
    throw std::invalid_argument("glorot_uniform_init: dimensions must be >= 1, got " +
                                shape_str(rows, cols));
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Mat<T> m(rows, cols);
  for (T& v : m.data) v = static_cast<T>(rng.uniform(-limit, limit));
  return m;
}

}  // namespace matner
