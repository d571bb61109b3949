#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <initializer_list>
#include <utility>

#include "dsekit/errors.hpp"

namespace dsekit {

/// Supported dense dimension envelope (filter state/measurement sizes).
inline constexpr int kMaxDim = 16;

inline void check_dim(int n) {
  if (n < 1 || n > kMaxDim)
    throw ConfigError("dimension " + std::to_string(n) + " outside supported range [1, " +
                      std::to_string(kMaxDim) + "]");
}

/** @brief Fixed-capacity column vector with runtime dimension. */
class Vec {
 public:
  explicit Vec(int n, double fill = 0.0) : n_(n) {
    check_dim(n);
    a_.fill(0.0);
    for (int i = 0; i < n_; ++i) a_[i] = fill;
  }
  static Vec of(std::initializer_list<double> xs) {
    Vec v(static_cast<int>(xs.size()));
    int i = 0;
    for (double x : xs) v.a_[i++] = x;
    return v;
  }

  int size() const { return n_; }
  double operator[](int i) const { return a_[static_cast<std::size_t>(i)]; }
  double& operator[](int i) { return a_[static_cast<std::size_t>(i)]; }
  const double* data() const { return a_.data(); }

  Vec operator+(const Vec& o) const {
    Vec r = *this;
    for (int i = 0; i < n_; ++i) r.a_[i] += o.a_[i];
    return r;
  }
  Vec operator-(const Vec& o) const {
    Vec r = *this;
    for (int i = 0; i < n_; ++i) r.a_[i] -= o.a_[i];
    return r;
  }
  Vec scaled(double s) const {
    Vec r = *this;
    for (int i = 0; i < n_; ++i) r.a_[i] *= s;
    return r;
  }
  double dot(const Vec& o) const {
    double s = 0.0;
    for (int i = 0; i < n_; ++i) s += a_[i] * o.a_[i];
    return s;
  }
  double inf_norm() const {
    double m = 0.0;
    for (int i = 0; i < n_; ++i) m = std::max(m, std::fabs(a_[i]));
    return m;
  }
  bool all_finite() const {
    for (int i = 0; i < n_; ++i)
      if (!std::isfinite(a_[i])) return false;
    return true;
  }
  bool bits_equal(const Vec& o) const {
    return n_ == o.n_ && std::memcmp(a_.data(), o.a_.data(),
                                     sizeof(double) * static_cast<std::size_t>(n_)) == 0;
  }

 private:
  int n_;
  std::array<double, kMaxDim> a_;
};

/** @brief Dense row-major rectangular matrix with runtime shape. */
class Mat {
 public:
  Mat(int rows, int cols, double fill = 0.0) : r_(rows), c_(cols) {
    check_dim(rows);
    check_dim(cols);
    a_.fill(0.0);
    if (fill != 0.0)
      for (int i = 0; i < r_ * c_; ++i) a_[static_cast<std::size_t>(i)] = fill;
  }
  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  int rows() const { return r_; }
  int cols() const { return c_; }
  double operator()(int i, int j) const { return a_[static_cast<std::size_t>(i * c_ + j)]; }
  double& operator()(int i, int j) { return a_[static_cast<std::size_t>(i * c_ + j)]; }
  const double* data() const { return a_.data(); }

  Vec col(int j) const {
    Vec v(r_);
    for (int i = 0; i < r_; ++i) v[i] = (*this)(i, j);
    return v;
  }
  Vec row(int i) const {
    Vec v(c_);
    for (int j = 0; j < c_; ++j) v[j] = (*this)(i, j);
    return v;
  }

  Mat operator+(const Mat& o) const {
    Mat m = *this;
    for (int i = 0; i < r_ * c_; ++i) m.a_[static_cast<std::size_t>(i)] += o.a_[static_cast<std::size_t>(i)];
    return m;
  }
  Mat operator-(const Mat& o) const {
    Mat m = *this;
    for (int i = 0; i < r_ * c_; ++i) m.a_[static_cast<std::size_t>(i)] -= o.a_[static_cast<std::size_t>(i)];
    return m;
  }
  Mat scaled(double s) const {
    Mat m = *this;
    for (int i = 0; i < r_ * c_; ++i) m.a_[static_cast<std::size_t>(i)] *= s;
    return m;
  }
  Mat operator*(const Mat& o) const {
    Mat m(r_, o.c_);
    for (int i = 0; i < r_; ++i)
      for (int j = 0; j < o.c_; ++j) {
        double s = 0.0;
        for (int k = 0; k < c_; ++k) s += (*this)(i, k) * o(k, j);
        m(i, j) = s;
      }
    return m;
  }
  Vec operator*(const Vec& v) const {
    Vec y(r_);
    for (int i = 0; i < r_; ++i) {
      double s = 0.0;
      for (int j = 0; j < c_; ++j) s += (*this)(i, j) * v[j];
      y[i] = s;
    }
    return y;
  }
  Mat transposed() const {
    Mat m(c_, r_);
    for (int i = 0; i < r_; ++i)
      for (int j = 0; j < c_; ++j) m(j, i) = (*this)(i, j);
    return m;
  }
  /** Outer product a·bᵀ. */
  static Mat outer(const Vec& a, const Vec& b) {
    Mat m(a.size(), b.size());
    for (int i = 0; i < a.size(); ++i)
      for (int j = 0; j < b.size(); ++j) m(i, j) = a[i] * b[j];
    return m;
  }
  double inf_norm() const {
    double m = 0.0;
    for (int i = 0; i < r_ * c_; ++i) m = std::max(m, std::fabs(a_[static_cast<std::size_t>(i)]));
    return m;
  }
  bool all_finite() const {
    for (int i = 0; i < r_ * c_; ++i)
      if (!std::isfinite(a_[static_cast<std::size_t>(i)])) return false;
    return true;
  }

 private:
  int r_, c_;
  std::array<double, kMaxDim * kMaxDim> a_;
};

/**
 * @brief Square matrix that is exactly symmetric by construction.
 *
 * Every mutation path writes both (i,j) and (j,i), so entries(i,j) ==
 * entries(j,i) holds bit-for-bit after any sequence of operations.
 */
class SymMatrix {
 public:
  explicit SymMatrix(int n) : n_(n) {
    check_dim(n);
    a_.fill(0.0);
  }
  static SymMatrix identity(int n) {
    SymMatrix s(n);
    for (int i = 0; i < n; ++i) s.set(i, i, 1.0);
    return s;
  }
  static SymMatrix diagonal(const Vec& d) {
    SymMatrix s(d.size());
    for (int i = 0; i < d.size(); ++i) s.set(i, i, d[i]);
    return s;
  }

  int dim() const { return n_; }
  double operator()(int i, int j) const { return a_[static_cast<std::size_t>(i * n_ + j)]; }
  void set(int i, int j, double v) {
    a_[static_cast<std::size_t>(i * n_ + j)] = v;
    a_[static_cast<std::size_t>(j * n_ + i)] = v;
  }
  const double* data() const { return a_.data(); }

  Mat as_mat() const {
    Mat m(n_, n_);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) m(i, j) = (*this)(i, j);
    return m;
  }
  SymMatrix operator+(const SymMatrix& o) const {
    SymMatrix s = *this;
    for (int i = 0; i < n_ * n_; ++i) s.a_[static_cast<std::size_t>(i)] += o.a_[static_cast<std::size_t>(i)];
    return s;
  }
  SymMatrix operator-(const SymMatrix& o) const {
    SymMatrix s = *this;
    for (int i = 0; i < n_ * n_; ++i) s.a_[static_cast<std::size_t>(i)] -= o.a_[static_cast<std::size_t>(i)];
    return s;
  }
  SymMatrix scaled(double f) const {
    SymMatrix s = *this;
    for (int i = 0; i < n_ * n_; ++i) s.a_[static_cast<std::size_t>(i)] *= f;
    return s;
  }
  double trace() const {
    double t = 0.0;
    for (int i = 0; i < n_; ++i) t += (*this)(i, i);
    return t;
  }
  Vec diag() const {
    Vec d(n_);
    for (int i = 0; i < n_; ++i) d[i] = (*this)(i, i);
    return d;
  }
  double inf_norm() const {
    double m = 0.0;
    for (int i = 0; i < n_ * n_; ++i) m = std::max(m, std::fabs(a_[static_cast<std::size_t>(i)]));
    return m;
  }
  bool all_finite() const {
    for (int i = 0; i < n_ * n_; ++i)
      if (!std::isfinite(a_[static_cast<std::size_t>(i)])) return false;
    return true;
  }
  bool is_diagonal() const {
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j)
        if (i != j && (*this)(i, j) != 0.0) return false;
    return true;
  }
  bool bits_equal(const SymMatrix& o) const {
    return n_ == o.n_ && std::memcmp(a_.data(), o.a_.data(),
                                     sizeof(double) * static_cast<std::size_t>(n_ * n_)) == 0;
  }

 private:
  int n_;
  std::array<double, kMaxDim * kMaxDim> a_;
};

/** @brief (A + Aᵀ)/2. Idempotent bit-for-bit on already-symmetric input. */
inline SymMatrix symmetrize(const Mat& a) {
  if (a.rows() != a.cols()) throw ConfigError("symmetrize requires a square matrix");
  SymMatrix s(a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j <= i; ++j) s.set(i, j, (a(i, j) + a(j, i)) / 2.0);
  return s;
}

namespace detail {
/// Plain lower-Cholesky attempt; returns false on a non-positive pivot.
inline bool try_cholesky(const SymMatrix& p, Mat& l) {
  const int n = p.dim();
  l = Mat(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = p(i, j);
      for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      if (i == j) {
        if (!(s > 0.0) || !std::isfinite(s)) return false;
        l(i, i) = std::sqrt(s);
      } else {
        l(i, j) = s / l(j, j);
      }
    }
  }
  return true;
}
}  // namespace detail

/**
 * @brief Lower-triangular Cholesky factor with diagonal-jitter repair.
 *
 * On failure, retries with P + ε·I where ε starts at 1e-12·trace(P) and
 * doubles while ε ≤ 1e-6·trace(P); beyond that throws NotPositiveDefinite.
 * @param jitter_out if non-null, receives the ε actually added (0 if none).
 */
inline Mat cholesky(const SymMatrix& p, double* jitter_out = nullptr) {
  Mat l(p.dim(), p.dim());
  if (detail::try_cholesky(p, l)) {
    if (jitter_out) *jitter_out = 0.0;
    return l;
  }
  const double tr = p.trace();
  if (tr > 0.0 && std::isfinite(tr)) {
    for (double eps = 1e-12 * tr; eps <= 1e-6 * tr; eps *= 2.0) {
      SymMatrix pj = p;
      for (int i = 0; i < p.dim(); ++i) pj.set(i, i, p(i, i) + eps);
      if (detail::try_cholesky(pj, l)) {
        if (jitter_out) *jitter_out = eps;
        return l;
      }
    }
  }
  throw NotPositiveDefinite("matrix not positive definite after diagonal jitter repair (trace " +
                            std::to_string(tr) + ")");
}

/** Forward substitution: solve L·y = b for lower-triangular L. */
inline Vec solve_lower(const Mat& l, const Vec& b) {
  Vec y(b.size());
  for (int i = 0; i < b.size(); ++i) {
    double s = b[i];
    for (int k = 0; k < i; ++k) s -= l(i, k) * y[k];
    y[i] = s / l(i, i);
  }
  return y;
}

/** Back substitution: solve Lᵀ·x = y for lower-triangular L. */
inline Vec solve_lower_transposed(const Mat& l, const Vec& y) {
  const int n = y.size();
  Vec x(n);
  for (int i = n - 1; i >= 0; --i) {
    double s = y[i];
    for (int k = i + 1; k < n; ++k) s -= l(k, i) * x[k];
    x[i] = s / l(i, i);
  }
  return x;
}

/** Symmetric positive-definite solve A·x = b through the Cholesky factor. */
inline Vec solve_spd(const SymMatrix& a, const Vec& b) {
  Mat l = cholesky(a);
  return solve_lower_transposed(l, solve_lower(l, b));
}

/** General square solve A·x = b, Gaussian elimination with partial pivoting. */
inline Vec solve_linear(Mat a, Vec b) {
  if (a.rows() != a.cols() || a.rows() != b.size())
    throw ConfigError("solve_linear requires a square system");
  const int n = a.rows();
  for (int k = 0; k < n; ++k) {
    int piv = k;
    for (int i = k + 1; i < n; ++i)
      if (std::fabs(a(i, k)) > std::fabs(a(piv, k))) piv = i;
    if (a(piv, k) == 0.0) throw NumericError("singular matrix in solve_linear");
    if (piv != k) {
      for (int j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
      std::swap(b[k], b[piv]);
    }
    for (int i = k + 1; i < n; ++i) {
      const double f = a(i, k) / a(k, k);
      for (int j = k; j < n; ++j) a(i, j) -= f * a(k, j);
      b[i] -= f * b[k];
    }
  }
  Vec x(n);
  for (int i = n - 1; i >= 0; --i) {
    double s = b[i];
    for (int k = i + 1; k < n; ++k) s -= a(i, k) * x[k];
    x[i] = s / a(i, i);
  }
  return x;
}

}  // namespace dsekit
