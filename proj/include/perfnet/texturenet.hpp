#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

#include "perfnet/error.hpp"
#include "perfnet/matrix.hpp"
#include "perfnet/nn/layers.hpp"
#include "perfnet/nn/params.hpp"

namespace perfnet {

struct TextureConfig {
  std::size_t num_bands = 4;
  std::size_t blocks_per_band = 2;
  std::size_t hidden_channels = 32;
  // Without biases a block maps an all-zero neighborhood to zero.
  bool bias = true;

  void validate() const {
    if (num_bands == 0) throw InvalidConfig("num_bands must be >= 1");
    if (blocks_per_band == 0) throw InvalidConfig("blocks_per_band must be >= 1");
    if (hidden_channels == 0) throw InvalidConfig("hidden_channels must be >= 1");
  }
  bool operator==(const TextureConfig&) const = default;
};

struct BandRange {
  std::size_t begin = 0;  // first bin
  std::size_t end = 0;    // one past the last bin
  std::size_t size() const { return end - begin; }
  bool operator==(const BandRange&) const = default;
};

/// Contiguous bands covering [0, bins), low frequencies first. The first
/// bins % count bands hold one extra bin.
inline std::vector<BandRange> band_partition(std::size_t bins, std::size_t count) {
  if (count < 1 || count > bins)
    throw InvalidBandCount("band count " + std::to_string(count) + " not in [1, " + std::to_string(bins) + "]");
  std::vector<BandRange> bands;
  std::size_t at = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t size = bins / count + (i < bins % count ? 1 : 0);
    bands.push_back({at, at + size});
    at += size;
  }
  return bands;
}

template <typename T>
struct TextureWeights {
  TextureConfig config;
  nn::ParamSet<T> params;
};

namespace texture_detail {

inline std::size_t tensors_per_block(const TextureConfig& c) { return c.bias ? 4 : 2; }

// Tensor index of the weight of conv 0 or 1 in band `band`, block `block`;
// its bias (if any) follows it.
inline std::size_t weight_index(const TextureConfig& c, std::size_t band, std::size_t block, std::size_t conv) {
  return (band * c.blocks_per_band + block) * tensors_per_block(c) + conv * (c.bias ? 2 : 1);
}

template <typename Set>
auto bias_span(const TextureConfig& c, Set& p, std::size_t band, std::size_t block, std::size_t conv) {
  using Span = decltype(p.data(0));
  return c.bias ? p.data(weight_index(c, band, block, conv) + 1) : Span{};
}

template <typename T>
std::vector<std::size_t> build_layout(const TextureConfig& c, nn::ParamSet<T>& p) {
  std::vector<std::size_t> fan_in;
  for (std::size_t b = 0; b < c.num_bands; ++b)
    for (std::size_t j = 0; j < c.blocks_per_band; ++j) {
      const std::string prefix = "band" + std::to_string(b + 1) + ".block" + std::to_string(j + 1);
      p.add(prefix + ".conv1.weight", {c.hidden_channels, 1, 3, 3});
      fan_in.push_back(9);
      if (c.bias) {
        p.add(prefix + ".conv1.bias", {c.hidden_channels});
        fan_in.push_back(9);
      }
      p.add(prefix + ".conv2.weight", {1, c.hidden_channels, 3, 3});
      fan_in.push_back(9 * c.hidden_channels);
      if (c.bias) {
        p.add(prefix + ".conv2.bias", {1});
        fan_in.push_back(9 * c.hidden_channels);
      }
    }
  return fan_in;
}

/// Rows a band's residual depends on: each 3x3 conv widens the receptive
/// field by one bin, two convs per block.
inline BandRange window(const BandRange& band, std::size_t bins, const TextureConfig& c) {
  const std::size_t halo = 2 * c.blocks_per_band;
  return {band.begin > halo ? band.begin - halo : 0, std::min(bins, band.end + halo)};
}

}  // namespace texture_detail

template <typename T>
TextureWeights<T> texture_init(const TextureConfig& config, std::uint64_t seed) {
  config.validate();
  TextureWeights<T> w{config, {}};
  const auto fan_in = texture_detail::build_layout(config, w.params);
  nn::init_uniform(w.params, seed, [&](std::size_t i) { return fan_in[i]; });
  return w;
}

/// All-zero weights: the refinement is the identity.
template <typename T>
TextureWeights<T> texture_zero(const TextureConfig& config) {
  config.validate();
  TextureWeights<T> w{config, {}};
  texture_detail::build_layout(config, w.params);
  return w;
}

template <typename T>
struct TextureTape {
  struct Block {
    Matrix<T> input;  // (1, R*T)
    Matrix<T> hidden_pre;  // (H, R*T)
  };
  struct Band {
    BandRange window;
    std::vector<Block> blocks;
  };
  std::vector<BandRange> bands;
  std::vector<Band> band_tapes;
  Matrix<T> unclamped;  // S_B
};

/// Band-masked residual cascade. S_0 = coarse; for each band i from low to
/// high, R_i = blocks_i(S_{i-1}) over the whole matrix and only band i's bins
/// take S_i = S_{i-1} + R_i. Returns max(S_B, 0).
///
/// Each block is x <- x + conv3x3(silu(conv3x3(x))) (1 -> hidden -> 1
/// channels) and R_i is the sum of the block increments. Only the rows that
/// influence band i are evaluated; zero padding applies at the true matrix
/// edges, so the result equals the full-matrix computation.
///
/// If `stages` is given it receives S_0 .. S_B.
template <typename T>
Matrix<T> texture_forward(const Matrix<T>& coarse, const TextureWeights<T>& w, std::type_identity_t<TextureTape<T>>* tape = nullptr,
                          std::type_identity_t<std::vector<Matrix<T>>>* stages = nullptr) {
  using namespace texture_detail;
  const TextureConfig& c = w.config;
  const std::size_t bins = coarse.rows(), frames = coarse.cols();
  if (bins == 0 || frames == 0) throw ShapeMismatch("empty spectrogram");
  if (w.params.size() != tensors_per_block(c) * c.num_bands * c.blocks_per_band)
    throw ShapeMismatch("texture weights do not match their config");
  const auto bands = band_partition(bins, c.num_bands);
  const auto& p = w.params;

  TextureTape<T> local;
  TextureTape<T>& tp = tape ? *tape : local;
  tp = {};
  tp.bands = bands;

  Matrix<T> s = coarse;
  if (stages) {
    stages->clear();
    stages->push_back(s);
  }
  for (std::size_t b = 0; b < c.num_bands; ++b) {
    const BandRange win = window(bands[b], bins, c);
    const std::size_t rows = win.size();
    typename TextureTape<T>::Band band_tape{win, {}};

    Matrix<T> x(1, rows * frames);
    std::copy(s.data() + win.begin * frames, s.data() + win.end * frames, x.data());
    Matrix<T> residual(1, rows * frames);
    for (std::size_t j = 0; j < c.blocks_per_band; ++j) {
      Matrix<T> pre = nn::conv3x3_forward(x, rows, frames, p.data(weight_index(c, b, j, 0)),
                                          bias_span(c, p, b, j, 0), c.hidden_channels);
      Matrix<T> act = pre;
      nn::silu_inplace(act);
      Matrix<T> delta =
          nn::conv3x3_forward(act, rows, frames, p.data(weight_index(c, b, j, 1)), bias_span(c, p, b, j, 1), 1);
      if (tape) band_tape.blocks.push_back({x, std::move(pre)});
      for (std::size_t i = 0; i < delta.size(); ++i) {
        residual.data()[i] += delta.data()[i];
        x.data()[i] += delta.data()[i];
      }
    }
    const std::size_t offset = (bands[b].begin - win.begin) * frames;
    for (std::size_t i = 0; i < bands[b].size() * frames; ++i)
      s.data()[bands[b].begin * frames + i] += residual.data()[offset + i];
    if (tape) tp.band_tapes.push_back(std::move(band_tape));
    if (stages) stages->push_back(s);
  }

  if (tape) tp.unclamped = s;
  for (auto& v : s.storage()) v = std::max(v, T(0));
  return s;
}

/// Accumulates weight gradients; returns d(loss)/d(coarse). Gradient through
/// the final clamp is taken as zero where S_B <= 0.
template <typename T>
Matrix<T> texture_backward(const TextureTape<T>& tp, const Matrix<T>& d_refined, const TextureWeights<T>& w,
                           nn::ParamSet<T>& grads) {
  using namespace texture_detail;
  const TextureConfig& c = w.config;
  const auto& p = w.params;
  const std::size_t frames = tp.unclamped.cols();
  if (d_refined.rows() != tp.unclamped.rows() || d_refined.cols() != frames)
    throw ShapeMismatch("refined gradient shape does not match the forward pass");
  if (tp.band_tapes.size() != c.num_bands) throw ShapeMismatch("tape was recorded without gradients");

  Matrix<T> d_s = d_refined;
  for (std::size_t i = 0; i < d_s.size(); ++i)
    if (!(tp.unclamped.data()[i] > T(0))) d_s.data()[i] = T(0);

  for (std::size_t b = c.num_bands; b-- > 0;) {
    const auto& bt = tp.band_tapes[b];
    const BandRange win = bt.window;
    const std::size_t rows = win.size();
    const BandRange band = tp.bands[b];

    // dL/dR restricted to band rows (the mask M_b).
    Matrix<T> d_res(1, rows * frames);
    std::copy(d_s.data() + band.begin * frames, d_s.data() + band.end * frames,
              d_res.data() + (band.begin - win.begin) * frames);

    Matrix<T> d_x(1, rows * frames);  // dL/dx_j, zero for the last block's output
    for (std::size_t j = c.blocks_per_band; j-- > 0;) {
      const auto& blk = bt.blocks[j];
      Matrix<T> d_delta = d_res;
      for (std::size_t i = 0; i < d_delta.size(); ++i) d_delta.data()[i] += d_x.data()[i];
      Matrix<T> act = blk.hidden_pre;
      nn::silu_inplace(act);
      Matrix<T> d_act = nn::conv3x3_backward(act, rows, frames, p.data(weight_index(c, b, j, 1)), d_delta,
                                             grads.data(weight_index(c, b, j, 1)), bias_span(c, grads, b, j, 1));
      nn::silu_backward(blk.hidden_pre, d_act);
      Matrix<T> d_in = nn::conv3x3_backward(blk.input, rows, frames, p.data(weight_index(c, b, j, 0)), d_act,
                                            grads.data(weight_index(c, b, j, 0)), bias_span(c, grads, b, j, 0));
      for (std::size_t i = 0; i < d_x.size(); ++i) d_x.data()[i] += d_in.data()[i];
    }
    for (std::size_t i = 0; i < rows * frames; ++i) d_s.data()[win.begin * frames + i] += d_x.data()[i];
  }
  return d_s;
}

}  // namespace perfnet
