#pragma once

#include <chrono>
#include <cstdint>
#include <string>

#include "perfnet/contournet.hpp"
#include "perfnet/dsp/griffin_lim.hpp"
#include "perfnet/error.hpp"
#include "perfnet/model.hpp"
#include "perfnet/pianoroll.hpp"
#include "perfnet/texturenet.hpp"

namespace perfnet {

struct StageTimings {
  double contour_ms = 0.0;
  double texture_ms = 0.0;
  double griffin_lim_ms = 0.0;
  double total_ms() const { return contour_ms + texture_ms + griffin_lim_ms; }
};

struct SynthesisResult {
  dsp::AudioBuffer audio;
  std::size_t frames = 0;
  StageTimings timings;
  double duration_s() const {
    return static_cast<double>(audio.samples.size()) / static_cast<double>(audio.sample_rate);
  }
};

struct SynthesisOptions {
  int gl_iterations = 60;
  std::uint64_t gl_seed = 0;
};

/// Resolves an instrument label; an empty label picks the first one.
template <typename T>
std::size_t resolve_instrument(const Model<T>& model, const std::string& label) {
  if (model.labels.empty()) return 0;
  if (label.empty()) return 0;
  const auto i = model.label_index(label);
  if (i == model.labels.size()) {
    std::string known;
    for (const auto& l : model.labels) known += (known.empty() ? "" : ", ") + l;
    throw UnknownInstrument("'" + label + "' (available: " + known + ")");
  }
  return i;
}

/// Brings a roll onto the model's pitch range and frame rate.
template <typename T>
Pianoroll conform_roll(const Model<T>& model, const Pianoroll& roll) {
  Pianoroll r = roll;
  const double fr = model.config.frame_rate();
  if (r.frame_rate != fr) r = score_to_pianoroll(pianoroll_to_score(r), fr, r.pitch_min, r.pitch_max).roll;
  if (r.pitch_min != model.config.pitch_min || r.pitch_max != model.config.pitch_max)
    r = with_pitch_range(r, model.config.pitch_min, model.config.pitch_max);
  return r;
}

/// pianoroll -> ContourNet -> TextureNet -> Griffin-Lim.
template <typename T>
SynthesisResult synthesize(const Model<T>& model, const Pianoroll& roll, std::size_t label,
                           const SynthesisOptions& opt = {}) {
  using clock = std::chrono::steady_clock;
  auto ms = [](clock::time_point a, clock::time_point b) {
    return std::chrono::duration<double, std::milli>(b - a).count();
  };
  const auto r = conform_roll(model, roll);
  SynthesisResult out;
  out.frames = r.num_frames();

  const auto t0 = clock::now();
  const auto cond = one_hot<T>(model.labels.size(), label);
  const auto coarse = contour_forward(roll_to_input<T>(r), std::span<const T>(cond), model.contour);
  const auto t1 = clock::now();
  const auto refined = texture_forward(coarse, model.texture);
  const auto t2 = clock::now();
  dsp::Spectrogram mag{model.config.geometry, refined.template cast<double>()};
  out.audio = dsp::griffin_lim(mag, opt.gl_iterations, opt.gl_seed, model.config.sample_rate).audio;
  const auto t3 = clock::now();
  out.timings = {ms(t0, t1), ms(t1, t2), ms(t2, t3)};
  return out;
}

}  // namespace perfnet
