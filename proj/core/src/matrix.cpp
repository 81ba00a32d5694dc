#include "dpm/matrix.hpp"

#include <charconv>
#include <cmath>

namespace dpm {

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

Vec DenseMatrix::column(std::size_t j) const {
  if (j >= cols) throw ShapeError("column: index " + std::to_string(j) + " out of range for " + shape_string(*this));
  Vec out(rows);
  for (std::size_t i = 0; i < rows; ++i) out[i] = (*this)(i, j);
  return out;
}

void DenseMatrix::set_column(std::size_t j, std::span<const double> v) {
  if (j >= cols || v.size() != rows)
    throw ShapeError("set_column: vector of length " + std::to_string(v.size()) + " into column " +
                     std::to_string(j) + " of " + shape_string(*this));
  for (std::size_t i = 0; i < rows; ++i) (*this)(i, j) = v[i];
}

std::string shape_string(const DenseMatrix& m) {
  return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

Vec affine_map(const DenseMatrix& w, std::span<const double> x, std::span<const double> b) {
  if (w.cols != x.size() || w.rows != b.size())
    throw ShapeError("affine_map: W is " + shape_string(w) + ", x has length " + std::to_string(x.size()) +
                     ", b has length " + std::to_string(b.size()));
  Vec y(b.begin(), b.end());
  for (std::size_t i = 0; i < w.rows; ++i) {
    const double* row = w.data.data() + i * w.cols;
    double acc = 0.0;
    for (std::size_t j = 0; j < w.cols; ++j) acc += row[j] * x[j];
    y[i] += acc;
  }
  return y;
}

void matvec_accumulate(const DenseMatrix& w, std::span<const double> x, Vec& y) {
  if (w.cols != x.size() || w.rows != y.size())
    throw ShapeError("matvec_accumulate: W is " + shape_string(w) + ", x has length " +
                     std::to_string(x.size()) + ", y has length " + std::to_string(y.size()));
  for (std::size_t i = 0; i < w.rows; ++i) {
    const double* row = w.data.data() + i * w.cols;
    double acc = 0.0;
    for (std::size_t j = 0; j < w.cols; ++j) acc += row[j] * x[j];
    y[i] += acc;
  }
}

void affine_backward(const DenseMatrix& w, std::span<const double> x, std::span<const double> g,
                     DenseMatrix& w_grad, Vec& b_grad, Vec* x_grad) {
  if (w.cols != x.size() || w.rows != g.size())
    throw ShapeError("affine_backward: W is " + shape_string(w) + ", x has length " +
                     std::to_string(x.size()) + ", g has length " + std::to_string(g.size()));
  if (w_grad.rows != w.rows || w_grad.cols != w.cols || b_grad.size() != w.rows)
    throw ShapeError("affine_backward: gradient buffers do not match W of " + shape_string(w));
  for (std::size_t i = 0; i < w.rows; ++i) {
    const double gi = g[i];
    double* wrow = w_grad.data.data() + i * w.cols;
    for (std::size_t j = 0; j < w.cols; ++j) wrow[j] += gi * x[j];
    b_grad[i] += gi;
  }
  if (x_grad != nullptr) {
    if (x_grad->size() != w.cols)
      throw ShapeError("affine_backward: x_grad has length " + std::to_string(x_grad->size()) +
                       ", W is " + shape_string(w));
    for (std::size_t i = 0; i < w.rows; ++i) {
      const double gi = g[i];
      const double* row = w.data.data() + i * w.cols;
      for (std::size_t j = 0; j < w.cols; ++j) (*x_grad)[j] += row[j] * gi;
    }
  }
}

Vec elementwise_activation(std::span<const double> x, Activation kind) {
  if (!all_finite(x)) throw NumericError("elementwise_activation: non-finite input");
  Vec y(x.size());
  switch (kind) {
    case Activation::sigmoid:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
      break;
    case Activation::neg_relu_exp:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::exp(-(x[i] > 0.0 ? x[i] : 0.0));
      break;
  }
  return y;
}

Vec softmax(std::span<const double> logits) {
  if (logits.empty()) throw ShapeError("softmax: empty input");
  if (!all_finite(logits)) throw NumericError("softmax: non-finite input");
  double m = logits[0];
  for (double v : logits) m = v > m ? v : m;
  Vec y(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    y[i] = std::exp(logits[i] - m);
    sum += y[i];
  }
  for (double& v : y) v /= sum;
  return y;
}

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace dpm
