#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dpm/errors.hpp"

namespace dpm {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles.
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec data;

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::size_t size() const { return data.size(); }
  void fill(double v) { data.assign(data.size(), v); }

  Vec column(std::size_t j) const;
  void set_column(std::size_t j, std::span<const double> v);
};

enum class Activation { sigmoid, tanh, neg_relu_exp };

double sigmoid(double x);

// y = W x + b. Throws ShapeError naming the operands on any mismatch.
Vec affine_map(const DenseMatrix& w, std::span<const double> x, std::span<const double> b);

// y += W x.
void matvec_accumulate(const DenseMatrix& w, std::span<const double> x, Vec& y);

// Reverse accumulation for y = W x + b given g = dL/dy:
// w_grad += g x^T, b_grad += g, and if x_grad is non-null, *x_grad += W^T g.
void affine_backward(const DenseMatrix& w, std::span<const double> x, std::span<const double> g,
                     DenseMatrix& w_grad, Vec& b_grad, Vec* x_grad);

// Elementwise map. neg_relu_exp(x) = exp(-max(0, x)), range (0, 1].
// Throws NumericError on non-finite input.
Vec elementwise_activation(std::span<const double> x, Activation kind);

// Numerically stable softmax; output is strictly positive and sums to 1.
// Throws ShapeError on empty input, NumericError on non-finite input.
Vec softmax(std::span<const double> logits);

bool all_finite(std::span<const double> v);

std::string shape_string(const DenseMatrix& m);

// Shortest decimal representation that round-trips the exact value.
std::string format_double(double v);

}  // namespace dpm
