#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <vector>

namespace gdyn::ad {

/// Dense row-major matrix of doubles. Vectors are represented as n x 1 or
/// 1 x n. All learning-side quantities in the project live in this type.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> d;

  Tensor() = default;
  Tensor(int r, int c, double fill = 0.0) : rows(r), cols(c), d(size_t(r) * c, fill) {
    if (r < 0 || c < 0) throw std::invalid_argument("Tensor: negative shape");
  }

  static Tensor row(std::initializer_list<double> xs) {
    Tensor t(1, int(xs.size()));
    int i = 0;
    for (double x : xs) t.d[i++] = x;
    return t;
  }
  static Tensor col(std::initializer_list<double> xs) {
    Tensor t(int(xs.size()), 1);
    int i = 0;
    for (double x : xs) t.d[i++] = x;
    return t;
  }
  static Tensor identity(int n) {
    Tensor t(n, n);
    for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
  }

  int size() const { return rows * cols; }
  double& at(int r, int c) { return d[size_t(r) * cols + c]; }
  double at(int r, int c) const { return d[size_t(r) * cols + c]; }
  double& operator[](int i) { return d[i]; }
  double operator[](int i) const { return d[i]; }

  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  bool finite() const {
    for (double x : d)
      if (!std::isfinite(x)) return false;
    return true;
  }

  double max_abs_diff(const Tensor& o) const {
    if (!same_shape(o)) throw std::invalid_argument("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (int i = 0; i < size(); ++i) m = std::max(m, std::abs(d[i] - o.d[i]));
    return m;
  }
};

/// C += A * B, naive kernel arranged so the inner loop vectorizes.
inline void matmul_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  const int n = a.rows, k = a.cols, m = b.cols;
  for (int i = 0; i < n; ++i) {
    const double* arow = &a.d[size_t(i) * k];
    double* crow = &c.d[size_t(i) * m];
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = &b.d[size_t(p) * m];
      for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dims differ");
  Tensor c(a.rows, b.cols);
  matmul_acc(a, b, c);
  return c;
}

inline Tensor transposed(const Tensor& a) {
  Tensor t(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
  return t;
}

}  // namespace gdyn::ad
