#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "perfnet/checkpoint.hpp"
#include "perfnet/dsp/griffin_lim.hpp"
#include "perfnet/dsp/stft.hpp"
#include "perfnet/loss.hpp"
#include "perfnet/midi.hpp"
#include "perfnet/model.hpp"
#include "perfnet/pianoroll.hpp"
#include "perfnet/rng.hpp"

namespace perfnet::selftest {

struct Result {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

/// Central-difference derivative of `loss` at a strided subset of each
/// tensor's entries, compared norm-wise with `analytic`.
inline double gradient_error(nn::ParamSet<double>& params, const nn::ParamSet<double>& analytic,
                             const std::function<double()>& loss, std::size_t max_per_tensor = 24) {
  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& data = params[t].data;
    const std::size_t stride = std::max<std::size_t>(1, data.size() / max_per_tensor);
    double diff = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < data.size(); i += stride) {
      const double saved = data[i];
      data[i] = saved + 1e-5;
      const double up = loss();
      data[i] = saved - 1e-5;
      const double down = loss();
      data[i] = saved;
      const double numeric = (up - down) / 2e-5;
      diff += std::pow(numeric - analytic[t].data[i], 2);
      norm += std::pow(numeric, 2) + std::pow(analytic[t].data[i], 2);
    }
    if (norm > 0) worst = std::max(worst, std::sqrt(diff / norm));
  }
  return worst;
}

}  // namespace detail

inline Result stft_matches_dft() {
  const dsp::StftGeometry g{64, 16};
  Rng rng(1);
  dsp::AudioBuffer a{1000, std::vector<double>(200)};
  for (auto& v : a.samples) v = rng.uniform(-1, 1);
  const auto fast = dsp::stft(a, g);
  const long long n = static_cast<long long>(a.samples.size());
  double worst = 0.0;
  for (std::size_t t = 0; t < fast.bins.cols(); ++t) {
    for (std::size_t k = 0; k < g.num_bins(); ++k) {
      std::complex<double> acc = 0.0;
      for (std::size_t j = 0; j < g.n_fft; ++j) {
        long long i = static_cast<long long>(t * g.hop + j) - static_cast<long long>(g.n_fft / 2);
        while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
        const double w = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(g.n_fft));
        acc += w * a.samples[static_cast<std::size_t>(i)] *
               std::polar(1.0, -2 * std::numbers::pi * static_cast<double>(j * k) / static_cast<double>(g.n_fft));
      }
      worst = std::max(worst, std::abs(acc - fast.bins(k, t)));
    }
  }
  return {"stft matches direct DFT", worst <= 1e-9, "max error " + detail::fmt(worst)};
}

inline Result istft_round_trip() {
  Rng rng(2);
  dsp::AudioBuffer a{16000, std::vector<double>(4096)};
  for (auto& v : a.samples) v = rng.uniform(-1, 1);
  const auto back = dsp::istft(dsp::stft(a), 16000, a.samples.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.samples.size(); ++i) worst = std::max(worst, std::abs(back.samples[i] - a.samples[i]));
  return {"istft inverts stft", worst < 1e-9, "max error " + detail::fmt(worst)};
}

inline Result griffin_lim_monotone() {
  dsp::AudioBuffer a{16000, std::vector<double>(8000)};
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    const double t = static_cast<double>(i) / 16000;
    a.samples[i] = std::sin(2 * std::numbers::pi * 440 * t) + 0.5 * std::sin(2 * std::numbers::pi * 880 * t);
  }
  const auto gl = dsp::griffin_lim(dsp::magnitude(dsp::stft(a)), 30, 7);
  bool monotone = true;
  for (std::size_t i = 1; i < gl.errors.size(); ++i) monotone &= gl.errors[i] <= gl.errors[i - 1] + 1e-7;
  return {"griffin-lim error non-increasing", monotone, "final error " + detail::fmt(gl.errors.back())};
}

inline Result midi_round_trip() {
  Rng rng(3);
  MidiScore s;
  for (int i = 0; i < 64; ++i) {
    NoteEvent n{static_cast<int>(rng.below(128)), rng.uniform(0, 8), rng.uniform(0.01, 1.0), 0, {}};
    s.notes.push_back(n);
    s.duration_s = std::max(s.duration_s, n.offset_s());
  }
  auto back = parse_midi(write_midi(s)).notes;
  auto key = [](const NoteEvent& n) { return std::make_pair(n.pitch, n.onset_s); };
  auto by_key = [&](const NoteEvent& a, const NoteEvent& b) { return key(a) < key(b); };
  std::sort(s.notes.begin(), s.notes.end(), by_key);
  std::sort(back.begin(), back.end(), by_key);
  bool ok = back.size() == s.notes.size();
  const double tick = 0.5 / 480;
  for (std::size_t i = 0; ok && i < back.size(); ++i)
    ok = back[i].pitch == s.notes[i].pitch && std::abs(back[i].onset_s - s.notes[i].onset_s) <= tick &&
         std::abs(back[i].offset_s() - s.notes[i].offset_s()) <= tick;
  return {"midi write/parse round trip", ok, std::to_string(back.size()) + " notes"};
}

inline Result pianoroll_round_trip() {
  Rng rng(4);
  bool ok = true;
  for (int k = 0; k < 20 && ok; ++k) {
    Pianoroll r{50, 65, 62.5, Matrix<std::uint8_t>(16, 48)};
    for (auto& v : r.data.storage()) v = rng.uniform() < 0.4;
    ok = score_to_pianoroll(pianoroll_to_score(r), 62.5, 50, 65).roll == r &&
         pianoroll_from_json(pianoroll_to_json(r)) == r;
  }
  return {"pianoroll round trips", ok, "20 random rolls"};
}

inline ModelConfig tiny_config() {
  ModelConfig c;
  c.sample_rate = 1000;
  c.geometry = {64, 16};
  c.pitch_min = 60;
  c.pitch_max = 71;
  c.encoder_widths = {6, 6};
  c.texture = {2, 1, 4};
  return c;
}

inline Result model_gradients() {
  auto m = model_init<double>(tiny_config(), {"a", "b"}, 5);
  for (auto& t : m.texture.params)
    for (auto& v : t.data) v *= 0.3;
  Rng rng(6);
  Matrix<double> input(m.config.num_pitches(), 8), target(m.config.geometry.num_bins(), 8);
  for (auto& v : input.storage()) v = rng.uniform() < 0.3;
  for (auto& v : target.storage()) v = rng.uniform(0, 3);
  ModelTape<double> tape;
  const auto out = model_forward(m, input, 1, &tape);
  auto grads = zero_grads(m);
  model_backward(m, tape, log_mse_grad(out.coarse, target, 0.5), log_mse_grad(out.refined, target, 1.0), grads);
  auto loss = [&] {
    const auto o = model_forward(m, input, 1);
    return loss_fn(o.coarse, o.refined, target).total;
  };
  const double e = std::max(detail::gradient_error(m.contour.params, grads.contour, loss),
                            detail::gradient_error(m.texture.params, grads.texture, loss));
  return {"model gradients match finite differences", e < 1e-4, "relative error " + detail::fmt(e)};
}

inline Result checkpoint_round_trip() {
  Checkpoint c;
  c.model = model_init<float>(tiny_config(), {"x"}, 8);
  c.step = 12;
  const auto bytes = serialize_checkpoint(c);
  bool ok = serialize_checkpoint(deserialize_checkpoint(bytes)) == bytes;
  auto bad = bytes;
  bad[bad.size() / 2] ^= 1;
  try {
    deserialize_checkpoint(bad);
    ok = false;
  } catch (const CorruptFile&) {
  }
  return {"checkpoint round trip and checksum", ok, std::to_string(bytes.size()) + " bytes"};
}

inline std::vector<Result> run_all() {
  std::vector<Result> out;
  for (auto* check : {stft_matches_dft, istft_round_trip, griffin_lim_monotone, midi_round_trip,
                      pianoroll_round_trip, model_gradients, checkpoint_round_trip}) {
    try {
      out.push_back(check());
    } catch (const std::exception& e) {
      out.push_back({"exception", false, e.what()});
    }
  }
  return out;
}

}  // namespace perfnet::selftest
