#pragma once

#include <functional>
#include <string>

#include "smore/matrix.hpp"
#include "smore/rng.hpp"

namespace smore {

enum class InitScheme { zeros, uniform_scaled, normal_scaled };

// Seeded parameter initialization. uniform_scaled draws from
// [-1/sqrt(cols), +1/sqrt(cols)], normal_scaled from N(0, 1/cols).
// Throws on zero-sized shapes.
Matrix seeded_init(std::size_t rows, std::size_t cols, InitScheme scheme, RngState& rng);

// Numerically stable softmax (max-subtracted). Throws on empty input.
Vector softmax(const Vector& v);

// Jacobian-vector product of softmax: given p = softmax(s) and g = dL/dp,
// returns dL/ds.
Vector softmax_backward(const Vector& p, const Vector& g);

double softplus(double x);
double sigmoid(double x);

double relu(double x);
// relu'(0) is defined as 1 so that the zero-initialized adapter (all
// pre-activations exactly 0) still receives gradients.
double relu_grad(double x);

// Central-difference gradient of a scalar function, the independent oracle for
// the analytic backward pass. Throws (naming the coordinate) if f returns a
// non-finite value.
Vector finite_diff_grad(const std::function<double(const Vector&)>& f, const Vector& theta,
                        double h);

}  // namespace smore
