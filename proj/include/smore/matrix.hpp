#pragma once

#include <cstddef>
#include <vector>

namespace smore {

// Dense row-major matrix of doubles. Zero-sized dimensions are allowed (the
// layer-0 mixer is d_1 x 0 by construction) but library entry points that
// allocate parameters reject empty shapes explicitly.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  double* row(std::size_t i) { return data.data() + i * cols; }
  const double* row(std::size_t i) const { return data.data() + i * cols; }
  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
};

using Vector = std::vector<double>;

// y = A x
Vector matvec(const Matrix& a, const Vector& x);
// C = A B
Matrix matmul(const Matrix& a, const Matrix& b);
// y = A^T x
Vector matvec_t(const Matrix& a, const Vector& x);
// g += u v^T
void add_outer(Matrix& g, const Vector& u, const Vector& v);
// y += alpha x
void axpy(Vector& y, double alpha, const Vector& x);
double dot(const Vector& x, const Vector& y);
double norm_inf(const Vector& x);
double norm2(const Vector& x);
Vector concat(const Vector& a, const Vector& b);
bool all_finite(const Vector& x);
bool all_finite(const Matrix& m);

}  // namespace smore
