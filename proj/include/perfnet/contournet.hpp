#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "perfnet/error.hpp"
#include "perfnet/matrix.hpp"
#include "perfnet/nn/layers.hpp"
#include "perfnet/nn/params.hpp"
#include "perfnet/pianoroll.hpp"

namespace perfnet {

/// Encoder/decoder over time with pitch rows as input channels and
/// frequency bins as output channels.
struct ContourConfig {
  std::size_t in_channels = 128;   // pitches P
  std::size_t out_channels = 513;  // bins F
  std::vector<std::size_t> encoder_widths{256, 384, 512, 512};
  std::size_t kernel = 5;
  std::size_t condition_dim = 0;  // K; 0 disables conditioning

  std::size_t stages() const { return encoder_widths.size(); }
  /// Time lengths must be a multiple of this.
  std::size_t time_multiple() const { return std::size_t{1} << stages(); }

  /// Output channels of decoder stage s (1-based, s = stages()..1).
  std::size_t decoder_out(std::size_t s) const { return s >= 2 ? encoder_widths[s - 2] : encoder_widths[0]; }
  std::size_t decoder_in(std::size_t s) const {
    return s == stages() ? encoder_widths.back() + condition_dim : decoder_out(s + 1) + encoder_widths[s - 1];
  }

  void validate() const {
    if (in_channels == 0 || out_channels == 0) throw InvalidConfig("channel counts must be positive");
    if (encoder_widths.empty()) throw InvalidConfig("encoder_widths must be non-empty");
    for (auto w : encoder_widths)
      if (w == 0) throw InvalidConfig("encoder widths must be positive");
    if (kernel % 2 == 0) throw InvalidConfig("kernel must be odd");
    if (stages() > 16) throw InvalidConfig("too many encoder stages");
  }

  bool operator==(const ContourConfig&) const = default;
};

template <typename T>
struct ContourWeights {
  ContourConfig config;
  nn::ParamSet<T> params;
};

namespace contour_detail {

/// Layout: enc{s}.{weight,bias} for s = 1..L, dec{s}.{weight,bias} for
/// s = L..1, out.{weight,bias}. Returns the fan-in of each tensor.
template <typename T>
std::vector<std::size_t> build_layout(const ContourConfig& c, nn::ParamSet<T>& p) {
  std::vector<std::size_t> fan_in;
  std::size_t in = c.in_channels;
  for (std::size_t s = 1; s <= c.stages(); ++s) {
    const std::size_t out = c.encoder_widths[s - 1];
    p.add("enc" + std::to_string(s) + ".weight", {out, in, c.kernel});
    p.add("enc" + std::to_string(s) + ".bias", {out});
    fan_in.insert(fan_in.end(), 2, in * c.kernel);
    in = out;
  }
  for (std::size_t s = c.stages(); s >= 1; --s) {
    const std::size_t din = c.decoder_in(s), dout = c.decoder_out(s);
    p.add("dec" + std::to_string(s) + ".weight", {din, dout, c.kernel});
    p.add("dec" + std::to_string(s) + ".bias", {dout});
    fan_in.insert(fan_in.end(), 2, din * c.kernel);
  }
  const std::size_t final_in = c.decoder_out(1) + c.in_channels;
  p.add("out.weight", {c.out_channels, final_in});
  p.add("out.bias", {c.out_channels});
  fan_in.insert(fan_in.end(), 2, final_in);
  return fan_in;
}

inline nn::Conv1dShape down(const ContourConfig& c) { return {c.kernel, 2, c.kernel / 2}; }
inline nn::Conv1dShape up(const ContourConfig& c) { return {c.kernel, 2, c.kernel / 2}; }
inline std::size_t enc_w(std::size_t s) { return 2 * (s - 1); }
inline std::size_t dec_w(const ContourConfig& c, std::size_t s) { return 2 * c.stages() + 2 * (c.stages() - s); }
inline std::size_t out_w(const ContourConfig& c) { return 4 * c.stages(); }

}  // namespace contour_detail

/// Uniform(-sqrt(1/fan_in), sqrt(1/fan_in)) for every weight and bias.
template <typename T>
ContourWeights<T> contour_init(const ContourConfig& config, std::uint64_t seed) {
  config.validate();
  ContourWeights<T> w{config, {}};
  const auto fan_in = contour_detail::build_layout(config, w.params);
  nn::init_uniform(w.params, seed, [&](std::size_t i) { return fan_in[i]; });
  return w;
}

/// Activations kept for the backward pass.
template <typename T>
struct ContourTape {
  std::size_t frames = 0;          // un-padded T
  std::vector<Matrix<T>> enc_pre;  // [s-1], s = 1..L
  std::vector<Matrix<T>> enc_out;  // [s], s = 0..L; enc_out[0] is the padded input
  std::vector<Matrix<T>> dec_in;   // [s-1], s = 1..L
  std::vector<Matrix<T>> dec_pre;  // [s-1]
  Matrix<T> final_in;
  Matrix<T> final_pre;
};

/// Coarse spectrogram (F, T) from a (P, T) input. T is zero-padded to a
/// multiple of 2^stages and the output cropped back. The condition vector is
/// broadcast over time and appended to the bottleneck channels.
template <typename T>
Matrix<T> contour_forward(const Matrix<T>& input, std::span<const T> condition, const ContourWeights<T>& w,
                          ContourTape<T>* tape = nullptr) {
  using namespace contour_detail;
  const ContourConfig& c = w.config;
  if (input.rows() != c.in_channels)
    throw ShapeMismatch("input has " + std::to_string(input.rows()) + " rows, expected " +
                        std::to_string(c.in_channels));
  if (input.cols() == 0) throw ShapeMismatch("input has no frames");
  if (c.condition_dim > 0 && condition.size() != c.condition_dim)
    throw MissingCondition("expected a condition vector of length " + std::to_string(c.condition_dim));
  if (c.condition_dim == 0 && !condition.empty())
    throw ShapeMismatch("condition vector given to an unconditioned network");

  const std::size_t frames = input.cols();
  const std::size_t m = c.time_multiple();
  const std::size_t padded = (frames + m - 1) / m * m;
  const auto& p = w.params;

  ContourTape<T> local;
  ContourTape<T>& tp = tape ? *tape : local;
  tp = {};
  tp.frames = frames;
  tp.enc_out.push_back(input.slice_cols(0, padded));

  std::size_t len = padded;
  for (std::size_t s = 1; s <= c.stages(); ++s) {
    len /= 2;
    Matrix<T> pre = nn::conv1d_forward(tp.enc_out.back(), p.data(enc_w(s)), p.data(enc_w(s) + 1),
                                       c.encoder_widths[s - 1], down(c), len);
    Matrix<T> act = pre;
    nn::silu_inplace(act);
    tp.enc_pre.push_back(std::move(pre));
    tp.enc_out.push_back(std::move(act));
  }

  Matrix<T> y = tp.enc_out.back();
  if (c.condition_dim > 0) {
    Matrix<T> cond(c.condition_dim, y.cols());
    for (std::size_t k = 0; k < c.condition_dim; ++k)
      std::fill(cond.row(k).begin(), cond.row(k).end(), condition[k]);
    y = nn::concat_rows(y, cond);
  }

  tp.dec_in.resize(c.stages());
  tp.dec_pre.resize(c.stages());
  for (std::size_t s = c.stages(); s >= 1; --s) {
    len *= 2;
    Matrix<T> pre = nn::conv_transpose1d_forward(y, p.data(dec_w(c, s)), p.data(dec_w(c, s) + 1),
                                                 c.decoder_out(s), up(c), len);
    Matrix<T> act = pre;
    nn::silu_inplace(act);
    tp.dec_in[s - 1] = std::move(y);
    tp.dec_pre[s - 1] = std::move(pre);
    y = nn::concat_rows(act, tp.enc_out[s - 1]);
  }

  tp.final_in = std::move(y);
  tp.final_pre = nn::conv1d_forward(tp.final_in, p.data(out_w(c)), p.data(out_w(c) + 1), c.out_channels,
                                    nn::Conv1dShape{1, 1, 0}, padded);
  Matrix<T> out(c.out_channels, frames);
  for (std::size_t r = 0; r < c.out_channels; ++r)
    for (std::size_t t = 0; t < frames; ++t) out(r, t) = nn::softplus(tp.final_pre(r, t));
  return out;
}

/// Back-propagate d(loss)/d(output) through the tape. Accumulates into
/// `grads` (same layout as the weights) and returns d(loss)/d(input).
template <typename T>
Matrix<T> contour_backward(const ContourTape<T>& tp, const Matrix<T>& d_out, const ContourWeights<T>& w,
                           nn::ParamSet<T>& grads) {
  using namespace contour_detail;
  const ContourConfig& c = w.config;
  const auto& p = w.params;
  if (d_out.rows() != c.out_channels || d_out.cols() != tp.frames)
    throw ShapeMismatch("output gradient shape does not match the forward pass");

  const std::size_t padded = tp.final_pre.cols();
  Matrix<T> d_pre(c.out_channels, padded);
  for (std::size_t r = 0; r < c.out_channels; ++r)
    for (std::size_t t = 0; t < tp.frames; ++t) d_pre(r, t) = d_out(r, t) * nn::sigmoid(tp.final_pre(r, t));

  Matrix<T> d_y = nn::conv1d_backward(tp.final_in, p.data(out_w(c)), d_pre, nn::Conv1dShape{1, 1, 0},
                                      grads.data(out_w(c)), grads.data(out_w(c) + 1));

  // Gradients flowing into encoder outputs through skip connections.
  std::vector<Matrix<T>> d_enc(c.stages() + 1);
  for (std::size_t s = 1; s <= c.stages(); ++s) {
    const std::size_t up_channels = c.decoder_out(s);
    Matrix<T> d_act = nn::take_rows(d_y, 0, up_channels);
    d_enc[s - 1] = nn::take_rows(d_y, up_channels, d_y.rows() - up_channels);
    nn::silu_backward(tp.dec_pre[s - 1], d_act);
    d_y = nn::conv_transpose1d_backward(tp.dec_in[s - 1], p.data(dec_w(c, s)), d_act, up(c),
                                        grads.data(dec_w(c, s)), grads.data(dec_w(c, s) + 1));
  }
  // d_y now refers to the (possibly conditioned) bottleneck.
  Matrix<T> d_x = nn::take_rows(d_y, 0, c.encoder_widths.back());
  for (std::size_t s = c.stages(); s >= 1; --s) {
    if (s < c.stages()) {
      auto& skip = d_enc[s];
      for (std::size_t i = 0; i < d_x.size(); ++i) d_x.data()[i] += skip.data()[i];
    }
    nn::silu_backward(tp.enc_pre[s - 1], d_x);
    d_x = nn::conv1d_backward(tp.enc_out[s - 1], p.data(enc_w(s)), d_x, down(c), grads.data(enc_w(s)),
                              grads.data(enc_w(s) + 1));
  }
  for (std::size_t i = 0; i < d_x.size(); ++i) d_x.data()[i] += d_enc[0].data()[i];
  return d_x.slice_cols(0, tp.frames);
}

/// Pianoroll rows as float channels.
template <typename T>
Matrix<T> roll_to_input(const Pianoroll& roll) {
  return roll.data.template cast<T>();
}

/// One-hot vector of length k with a 1 at `index`.
template <typename T>
std::vector<T> one_hot(std::size_t k, std::size_t index) {
  std::vector<T> v(k, T(0));
  if (index < k) v[index] = T(1);
  return v;
}

}  // namespace perfnet
