#pragma once

#include <cmath>
#include <cstddef>
#include <span>

#include <Eigen/Core>

#include "perfnet/matrix.hpp"

namespace perfnet::nn {

template <typename T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMajor<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMajor<T>>;

template <typename T>
MapMat<T> as_eigen(Matrix<T>& m) {
  return MapMat<T>(m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()));
}
template <typename T>
ConstMapMat<T> as_eigen(const Matrix<T>& m) {
  return ConstMapMat<T>(m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()));
}
template <typename T>
ConstMapMat<T> as_eigen(std::span<const T> s, std::size_t rows, std::size_t cols) {
  return ConstMapMat<T>(s.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
template <typename T>
MapMat<T> as_eigen(std::span<T> s, std::size_t rows, std::size_t cols) {
  return MapMat<T>(s.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

// ---------------------------------------------------------------------------
// Pointwise
// ---------------------------------------------------------------------------

template <typename T>
T sigmoid(T x) {
  return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

template <typename T>
T softplus(T x) {
  return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

/// SiLU (x * sigmoid(x)); smooth, so finite-difference checks have no kinks.
template <typename T>
void silu_inplace(Matrix<T>& m) {
  auto x = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>(m.data(), static_cast<Eigen::Index>(m.size()));
  x = x / (T(1) + (-x).exp());
}

/// grad *= silu'(pre)
template <typename T>
void silu_backward(const Matrix<T>& pre, Matrix<T>& grad) {
  const auto n = static_cast<Eigen::Index>(pre.size());
  auto x = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>(pre.data(), n);
  auto g = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>(grad.data(), n);
  const auto s = (T(1) / (T(1) + (-x).exp())).eval();
  g *= s * (T(1) + x * (T(1) - s));
}

// ---------------------------------------------------------------------------
// 1-D convolution along time (rows = channels, cols = time)
// ---------------------------------------------------------------------------

struct Conv1dShape {
  std::size_t kernel = 5;
  std::size_t stride = 1;
  std::size_t pad = 2;
};

/// cols(c*k + j, t) = x(c, t*stride + j - pad), zero outside.
template <typename T>
Matrix<T> im2col(const Matrix<T>& x, Conv1dShape s, std::size_t out_len) {
  Matrix<T> cols(x.rows() * s.kernel, out_len);
  const auto len = static_cast<long long>(x.cols());
  for (std::size_t c = 0; c < x.rows(); ++c) {
    const auto src = x.row(c);
    for (std::size_t j = 0; j < s.kernel; ++j) {
      auto dst = cols.row(c * s.kernel + j);
      for (std::size_t t = 0; t < out_len; ++t) {
        const long long i = static_cast<long long>(t * s.stride + j) - static_cast<long long>(s.pad);
        dst[t] = (i >= 0 && i < len) ? src[static_cast<std::size_t>(i)] : T(0);
      }
    }
  }
  return cols;
}

/// Adjoint of im2col: x(c, t*stride + j - pad) += cols(c*k + j, t).
template <typename T>
Matrix<T> col2im(const Matrix<T>& cols, Conv1dShape s, std::size_t channels, std::size_t x_len) {
  Matrix<T> x(channels, x_len);
  const auto len = static_cast<long long>(x_len);
  for (std::size_t c = 0; c < channels; ++c) {
    auto dst = x.row(c);
    for (std::size_t j = 0; j < s.kernel; ++j) {
      const auto src = cols.row(c * s.kernel + j);
      for (std::size_t t = 0; t < cols.cols(); ++t) {
        const long long i = static_cast<long long>(t * s.stride + j) - static_cast<long long>(s.pad);
        if (i >= 0 && i < len) dst[static_cast<std::size_t>(i)] += src[t];
      }
    }
  }
  return x;
}

template <typename T>
void add_bias(Matrix<T>& y, std::span<const T> bias) {
  if (bias.empty()) return;
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (auto& v : y.row(r)) v += bias[r];
}

template <typename T>
void accumulate_bias_grad(const Matrix<T>& dy, std::span<T> dbias) {
  if (dbias.empty()) return;
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    T acc = 0;
    for (T v : dy.row(r)) acc += v;
    dbias[r] += acc;
  }
}

/// y = W * im2col(x) + b with W of shape (out, in*k).
template <typename T>
Matrix<T> conv1d_forward(const Matrix<T>& x, std::span<const T> weight, std::span<const T> bias,
                         std::size_t out_channels, Conv1dShape s, std::size_t out_len) {
  const Matrix<T> cols = im2col(x, s, out_len);
  Matrix<T> y(out_channels, out_len);
  as_eigen(y).noalias() = as_eigen(weight, out_channels, cols.rows()) * as_eigen(cols);
  add_bias(y, bias);
  return y;
}

/// Accumulates dW, db; returns dx.
template <typename T>
Matrix<T> conv1d_backward(const Matrix<T>& x, std::span<const T> weight, const Matrix<T>& dy, Conv1dShape s,
                          std::span<T> dweight, std::span<T> dbias) {
  const Matrix<T> cols = im2col(x, s, dy.cols());
  as_eigen(dweight, dy.rows(), cols.rows()).noalias() += as_eigen(dy) * as_eigen(cols).transpose();
  accumulate_bias_grad(dy, dbias);
  Matrix<T> dcols(cols.rows(), cols.cols());
  as_eigen(dcols).noalias() = as_eigen(weight, dy.rows(), cols.rows()).transpose() * as_eigen(dy);
  return col2im(dcols, s, x.rows(), x.cols());
}

/// Transposed convolution: the adjoint of a strided conv, with weight V of
/// shape (in, out*k). Output length is out_len.
template <typename T>
Matrix<T> conv_transpose1d_forward(const Matrix<T>& x, std::span<const T> weight, std::span<const T> bias,
                                   std::size_t out_channels, Conv1dShape s, std::size_t out_len) {
  Matrix<T> ycols(out_channels * s.kernel, x.cols());
  as_eigen(ycols).noalias() =
      as_eigen(weight, x.rows(), out_channels * s.kernel).transpose() * as_eigen(x);
  Matrix<T> y = col2im(ycols, s, out_channels, out_len);
  add_bias(y, bias);
  return y;
}

template <typename T>
Matrix<T> conv_transpose1d_backward(const Matrix<T>& x, std::span<const T> weight, const Matrix<T>& dy,
                                    Conv1dShape s, std::span<T> dweight, std::span<T> dbias) {
  const Matrix<T> dycols = im2col(dy, s, x.cols());
  as_eigen(dweight, x.rows(), dycols.rows()).noalias() += as_eigen(x) * as_eigen(dycols).transpose();
  accumulate_bias_grad(dy, dbias);
  Matrix<T> dx(x.rows(), x.cols());
  as_eigen(dx).noalias() = as_eigen(weight, x.rows(), dycols.rows()) * as_eigen(dycols);
  return dx;
}

/// Stack b's rows under a's; both must share the column count.
template <typename T>
Matrix<T> concat_rows(const Matrix<T>& a, const Matrix<T>& b) {
  Matrix<T> out(a.rows() + b.rows(), a.cols());
  std::copy(a.storage().begin(), a.storage().end(), out.data());
  std::copy(b.storage().begin(), b.storage().end(), out.data() + a.size());
  return out;
}

template <typename T>
Matrix<T> take_rows(const Matrix<T>& m, std::size_t begin, std::size_t count) {
  Matrix<T> out(count, m.cols());
  std::copy(m.data() + begin * m.cols(), m.data() + (begin + count) * m.cols(), out.data());
  return out;
}

// ---------------------------------------------------------------------------
// 3x3 "same" 2-D convolution over (rows, time) planes.
// A multi-channel volume is a Matrix(C, R*T), one plane per row.
// ---------------------------------------------------------------------------

namespace conv2d_detail {

/// out[r, t] += w * in[r + dr, t + dt] over valid positions (zero padding).
template <typename T>
inline void shifted_axpy(T* out, const T* in, std::size_t rows, std::size_t cols, int dr, int dt, T w) {
  const std::size_t r0 = dr < 0 ? static_cast<std::size_t>(-dr) : 0;
  const std::size_t r1 = dr > 0 ? rows - std::min<std::size_t>(rows, static_cast<std::size_t>(dr)) : rows;
  const std::size_t t0 = dt < 0 ? static_cast<std::size_t>(-dt) : 0;
  const std::size_t t1 = dt > 0 ? cols - std::min<std::size_t>(cols, static_cast<std::size_t>(dt)) : cols;
  for (std::size_t r = r0; r < r1; ++r) {
    T* o = out + r * cols;
    const T* i = in + (r + dr) * cols + dt;
    for (std::size_t t = t0; t < t1; ++t) o[t] += w * i[t];
  }
}

}  // namespace conv2d_detail

/// cols(c*9 + k, p) = x(c, p + sign * offset_k), offset_k = (k/3 - 1, k%3 - 1).
template <typename T>
Matrix<T> im2col3x3(const Matrix<T>& x, std::size_t rows, std::size_t cols, int sign) {
  Matrix<T> out(x.rows() * 9, rows * cols);
  for (std::size_t c = 0; c < x.rows(); ++c)
    for (int k = 0; k < 9; ++k)
      conv2d_detail::shifted_axpy(out.row(c * 9 + static_cast<std::size_t>(k)).data(), x.row(c).data(), rows, cols,
                                  sign * (k / 3 - 1), sign * (k % 3 - 1), T(1));
  return out;
}

/// out(c, p) = sum_k y(c*9 + k, p + sign * offset_k).
template <typename T>
Matrix<T> shift_sum3x3(const Matrix<T>& y, std::size_t rows, std::size_t cols, int sign) {
  Matrix<T> out(y.rows() / 9, rows * cols);
  for (std::size_t c = 0; c < out.rows(); ++c)
    for (int k = 0; k < 9; ++k)
      conv2d_detail::shifted_axpy(out.row(c).data(), y.row(c * 9 + static_cast<std::size_t>(k)).data(), rows, cols,
                                  sign * (k / 3 - 1), sign * (k % 3 - 1), T(1));
  return out;
}

namespace conv2d_detail {
// Weight (out, in, 3, 3) rearranged to ((out, k), in).
template <typename T>
RowMajor<T> per_offset_weights(std::span<const T> weight, std::size_t out_channels, std::size_t in_channels) {
  RowMajor<T> wt(static_cast<Eigen::Index>(out_channels * 9), static_cast<Eigen::Index>(in_channels));
  for (std::size_t o = 0; o < out_channels; ++o)
    for (std::size_t i = 0; i < in_channels; ++i)
      for (std::size_t k = 0; k < 9; ++k)
        wt(static_cast<Eigen::Index>(o * 9 + k), static_cast<Eigen::Index>(i)) = weight[(o * in_channels + i) * 9 + k];
  return wt;
}
}  // namespace conv2d_detail

/// 3x3 zero-padded convolution, W layout (out, in, 3, 3):
/// y(o, r, t) = b(o) + sum_{i,dr,dt} W(o, i, dr+1, dt+1) * x(i, r+dr, t+dt).
/// Lowered to a GEMM on whichever side has fewer channels.
template <typename T>
Matrix<T> conv3x3_forward(const Matrix<T>& x, std::size_t rows, std::size_t cols, std::span<const T> weight,
                          std::span<const T> bias, std::size_t out_channels) {
  const std::size_t in_channels = x.rows();
  Matrix<T> y;
  if (in_channels <= out_channels) {
    const Matrix<T> patches = im2col3x3(x, rows, cols, 1);
    y = Matrix<T>(out_channels, rows * cols);
    as_eigen(y).noalias() = as_eigen(weight, out_channels, in_channels * 9) * as_eigen(patches);
  } else {
    Matrix<T> per_offset(out_channels * 9, rows * cols);
    as_eigen(per_offset).noalias() =
        conv2d_detail::per_offset_weights(weight, out_channels, in_channels) * as_eigen(x);
    y = shift_sum3x3(per_offset, rows, cols, 1);
  }
  add_bias(y, bias);
  return y;
}

/// Accumulates dW, db; returns dx.
template <typename T>
Matrix<T> conv3x3_backward(const Matrix<T>& x, std::size_t rows, std::size_t cols, std::span<const T> weight,
                           const Matrix<T>& dy, std::span<T> dweight, std::span<T> dbias) {
  const std::size_t in_channels = x.rows();
  const std::size_t out_channels = dy.rows();
  accumulate_bias_grad(dy, dbias);
  if (in_channels <= out_channels) {
    const Matrix<T> patches = im2col3x3(x, rows, cols, 1);
    as_eigen(dweight, out_channels, in_channels * 9).noalias() += as_eigen(dy) * as_eigen(patches).transpose();
    Matrix<T> d_patches(in_channels * 9, rows * cols);
    as_eigen(d_patches).noalias() = as_eigen(weight, out_channels, in_channels * 9).transpose() * as_eigen(dy);
    return shift_sum3x3(d_patches, rows, cols, -1);
  }
  const Matrix<T> d_per_offset = im2col3x3(dy, rows, cols, -1);
  const RowMajor<T> d_wt = as_eigen(d_per_offset) * as_eigen(x).transpose();
  for (std::size_t o = 0; o < out_channels; ++o)
    for (std::size_t i = 0; i < in_channels; ++i)
      for (std::size_t k = 0; k < 9; ++k)
        dweight[(o * in_channels + i) * 9 + k] += d_wt(static_cast<Eigen::Index>(o * 9 + k), static_cast<Eigen::Index>(i));
  Matrix<T> dx(in_channels, rows * cols);
  as_eigen(dx).noalias() =
      conv2d_detail::per_offset_weights(weight, out_channels, in_channels).transpose() * as_eigen(d_per_offset);
  return dx;
}

}  // namespace perfnet::nn
