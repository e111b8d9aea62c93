#include "smore/matrix.hpp"

#include <cmath>
#include <stdexcept>

#include "smore/kernels.hpp"

namespace smore {

Vector matvec(const Matrix& a, const Vector& x) {
  if (a.cols != x.size()) throw std::invalid_argument("matvec: shape mismatch");
  Vector y(a.rows, 0.0);
  if (a.rows && a.cols) kernels::active().matvec(a.data.data(), a.rows, a.cols, x.data(), y.data());
  return y;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw std::invalid_argument("matmul: shape mismatch");
  Matrix c(a.rows, b.cols);
  if (c.empty()) return c;
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t t = 0; t < a.cols; ++t) {
      if (b.cols) kernels::active().axpy(b.cols, a.at(i, t), b.row(t), c.row(i));
    }
  }
  return c;
}

Vector matvec_t(const Matrix& a, const Vector& x) {
  if (a.rows != x.size()) throw std::invalid_argument("matvec_t: shape mismatch");
  Vector y(a.cols, 0.0);
  if (a.rows && a.cols) kernels::active().matvec_t(a.data.data(), a.rows, a.cols, x.data(), y.data());
  return y;
}

void add_outer(Matrix& g, const Vector& u, const Vector& v) {
  if (g.rows != u.size() || g.cols != v.size()) throw std::invalid_argument("add_outer: shape mismatch");
  if (v.empty()) return;
  for (std::size_t i = 0; i < g.rows; ++i) {
    kernels::active().axpy(g.cols, u[i], v.data(), g.row(i));
  }
}

void axpy(Vector& y, double alpha, const Vector& x) {
  if (y.size() != x.size()) throw std::invalid_argument("axpy: length mismatch");
  if (!x.empty()) kernels::active().axpy(x.size(), alpha, x.data(), y.data());
}

double dot(const Vector& x, const Vector& y) {
  if (x.size() != y.size()) throw std::invalid_argument("dot: length mismatch");
  if (x.empty()) return 0.0;
  return kernels::active().dot(x.size(), x.data(), y.data());
}

double norm_inf(const Vector& x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

double norm2(const Vector& x) { return std::sqrt(dot(x, x)); }

Vector concat(const Vector& a, const Vector& b) {
  Vector out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

bool all_finite(const Vector& x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

bool all_finite(const Matrix& m) {
  for (double v : m.data)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace smore
