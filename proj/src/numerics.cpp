#include "smore/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace smore {

Matrix seeded_init(std::size_t rows, std::size_t cols, InitScheme scheme, RngState& rng) {
  if (rows == 0 || cols == 0) throw std::invalid_argument("seeded_init: empty shape");
  Matrix m(rows, cols);
  if (scheme == InitScheme::zeros) return m;
  const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
  if (scheme == InitScheme::uniform_scaled) {
    for (double& v : m.data) v = rng.uniform(-scale, scale);
  } else {
    for (double& v : m.data) v = scale * rng.normal();
  }
  return m;
}

Vector softmax(const Vector& v) {
  if (v.empty()) throw std::invalid_argument("softmax: empty input");
  const double m = *std::max_element(v.begin(), v.end());
  Vector out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - m);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

Vector softmax_backward(const Vector& p, const Vector& g) {
  if (p.size() != g.size()) throw std::invalid_argument("softmax_backward: length mismatch");
  double inner = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) inner += p[i] * g[i];
  Vector out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i] * (g[i] - inner);
  return out;
}

double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double relu(double x) { return x > 0.0 ? x : 0.0; }

double relu_grad(double x) { return x >= 0.0 ? 1.0 : 0.0; }

Vector finite_diff_grad(const std::function<double(const Vector&)>& f, const Vector& theta,
                        double h) {
  if (h <= 0.0) throw std::invalid_argument("finite_diff_grad: step must be positive");
  Vector grad(theta.size(), 0.0);
  Vector probe = theta;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    probe[i] = theta[i] + h;
    const double fp = f(probe);
    probe[i] = theta[i] - h;
    const double fm = f(probe);
    probe[i] = theta[i];
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw std::runtime_error("finite_diff_grad: non-finite value at coordinate " +
                               std::to_string(i));
    }
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

}  // namespace smore
