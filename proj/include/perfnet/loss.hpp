#pragma once

#include <cmath>

#include "perfnet/error.hpp"
#include "perfnet/matrix.hpp"

namespace perfnet {

struct LossWeights {
  double coarse = 0.5;
  double refined = 1.0;
};

/// Weighted terms; total == coarse + refined.
struct LossValue {
  double total = 0.0;
  double coarse = 0.0;
  double refined = 0.0;
};

namespace loss_detail {
template <typename T>
void check_shapes(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeMismatch("spectrogram shapes differ");
}
}  // namespace loss_detail

/// mean((log(1+a) - log(1+b))^2)
template <typename T>
double log_mse(const Matrix<T>& a, const Matrix<T>& b) {
  loss_detail::check_shapes(a, b);
  if (a.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::log1p(static_cast<double>(a.data()[i])) - std::log1p(static_cast<double>(b.data()[i]));
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

/// Deep-supervised log-magnitude L2 on the coarse and refined outputs.
template <typename T>
LossValue loss_fn(const Matrix<T>& coarse, const Matrix<T>& refined, const Matrix<T>& target,
                  LossWeights lambda = {}) {
  loss_detail::check_shapes(coarse, target);
  loss_detail::check_shapes(refined, target);
  LossValue v;
  v.coarse = lambda.coarse * log_mse(coarse, target);
  v.refined = lambda.refined * log_mse(refined, target);
  v.total = v.coarse + v.refined;
  return v;
}

/// d(lambda * log_mse(pred, target)) / d(pred)
template <typename T>
Matrix<T> log_mse_grad(const Matrix<T>& pred, const Matrix<T>& target, double lambda) {
  loss_detail::check_shapes(pred, target);
  Matrix<T> g(pred.rows(), pred.cols());
  const T k = static_cast<T>(2.0 * lambda / static_cast<double>(pred.size()));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T p = pred.data()[i];
    g.data()[i] = k * (std::log1p(p) - std::log1p(target.data()[i])) / (T(1) + p);
  }
  return g;
}

}  // namespace perfnet
