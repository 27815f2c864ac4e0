#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "perfnet/contournet.hpp"
#include "perfnet/dsp/stft.hpp"
#include "perfnet/rng.hpp"
#include "perfnet/texturenet.hpp"

namespace perfnet {

/// Architecture plus the audio geometry it was built for. The pianoroll
/// frame rate equals the spectrogram frame rate (sample_rate / hop).
struct ModelConfig {
  int sample_rate = 16000;
  dsp::StftGeometry geometry{};
  int pitch_min = 0;
  int pitch_max = 127;
  std::vector<std::size_t> encoder_widths{256, 384, 512, 512};
  std::size_t kernel = 5;
  TextureConfig texture{};

  double frame_rate() const { return geometry.frame_rate(sample_rate); }
  std::size_t num_pitches() const { return static_cast<std::size_t>(pitch_max - pitch_min + 1); }

  ContourConfig contour(std::size_t condition_dim) const {
    return {num_pitches(), geometry.num_bins(), encoder_widths, kernel, condition_dim};
  }
  bool operator==(const ModelConfig&) const = default;
};

/// ContourNet followed by TextureNet, with the instrument labels that index
/// the one-hot condition (condition_dim == labels.size()).
template <typename T>
struct Model {
  ModelConfig config;
  std::vector<std::string> labels;
  ContourWeights<T> contour;
  TextureWeights<T> texture;

  std::size_t label_index(const std::string& label) const {
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == label) return i;
    return labels.size();
  }
};

template <typename T>
Model<T> model_init(const ModelConfig& config, std::vector<std::string> labels, std::uint64_t seed) {
  check_roll_range(config.pitch_min, config.pitch_max);
  dsp::check_geometry(config.geometry);
  Model<T> m{config, std::move(labels), {}, {}};
  m.contour = contour_init<T>(config.contour(m.labels.size()), Rng::derive(seed, {1}).next_u64());
  m.texture = texture_init<T>(config.texture, Rng::derive(seed, {2}).next_u64());
  return m;
}

template <typename T>
struct ModelOutput {
  Matrix<T> coarse;
  Matrix<T> refined;
};

template <typename T>
struct ModelTape {
  ContourTape<T> contour;
  TextureTape<T> texture;
};

template <typename T>
ModelOutput<T> model_forward(const Model<T>& m, const Matrix<T>& input, std::size_t label,
                             ModelTape<T>* tape = nullptr) {
  const auto cond = one_hot<T>(m.labels.size(), label);
  ModelOutput<T> out;
  out.coarse = contour_forward(input, std::span<const T>(cond), m.contour, tape ? &tape->contour : nullptr);
  out.refined = texture_forward(out.coarse, m.texture, tape ? &tape->texture : nullptr);
  return out;
}

/// Gradients for both subnets given output gradients of the coarse and
/// refined spectrograms.
template <typename T>
struct ModelGrads {
  nn::ParamSet<T> contour;
  nn::ParamSet<T> texture;
};

template <typename T>
ModelGrads<T> zero_grads(const Model<T>& m) {
  return {m.contour.params.zeros_like(), m.texture.params.zeros_like()};
}

template <typename T>
Matrix<T> model_backward(const Model<T>& m, const ModelTape<T>& tape, const Matrix<T>& d_coarse,
                         const Matrix<T>& d_refined, ModelGrads<T>& grads) {
  Matrix<T> d_c = texture_backward(tape.texture, d_refined, m.texture, grads.texture);
  for (std::size_t i = 0; i < d_c.size(); ++i) d_c.data()[i] += d_coarse.data()[i];
  return contour_backward(tape.contour, d_c, m.contour, grads.contour);
}

}  // namespace perfnet
