#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "perfnet/dsp/stft.hpp"
#include "perfnet/dsp/wav.hpp"
#include "perfnet/io.hpp"
#include "perfnet/midi.hpp"
#include "perfnet/rng.hpp"

namespace perfnet {

struct SynthVoice {
  int harmonics = 4;
  double gain = 0.25;
  double attack_s = 0.005;
  double release_s = 0.02;
  double decay_per_s = 1.5;
};

inline double midi_to_hz(int pitch) { return 440.0 * std::pow(2.0, (pitch - 69) / 12.0); }

/// Sums `harmonics` partials with amplitude 1/h per note, shaped by a linear
/// attack, exponential decay and linear release inside the note. Partials at
/// or above Nyquist are skipped. Length is round(duration_s * sample_rate).
inline dsp::AudioBuffer render_additive(const MidiScore& score, int sample_rate = 16000, SynthVoice voice = {}) {
  dsp::AudioBuffer out;
  out.sample_rate = sample_rate;
  out.samples.assign(static_cast<std::size_t>(std::llround(score.duration_s * sample_rate)), 0.0);
  const double sr = sample_rate;
  for (const auto& n : score.notes) {
    const auto begin = static_cast<std::size_t>(std::llround(n.onset_s * sr));
    const auto end = std::min(out.samples.size(), static_cast<std::size_t>(std::llround(n.offset_s() * sr)));
    const double f0 = midi_to_hz(n.pitch);
    for (std::size_t i = begin; i < end; ++i) {
      const double t = static_cast<double>(i - begin) / sr;
      const double left = static_cast<double>(end - i) / sr;
      const double env = std::min({1.0, t / voice.attack_s, left / voice.release_s}) * std::exp(-voice.decay_per_s * t);
      double s = 0.0;
      for (int h = 1; h <= voice.harmonics; ++h) {
        if (f0 * h >= sr / 2) break;
        s += std::sin(2.0 * std::numbers::pi * f0 * h * t) / h;
      }
      out.samples[i] += voice.gain * env * s;
    }
  }
  double peak = 0.0;
  for (double v : out.samples) peak = std::max(peak, std::abs(v));
  if (peak > 0.95)
    for (double& v : out.samples) v *= 0.95 / peak;
  return out;
}

/// A monophonic phrase with occasional dyads over pitches 60..95. The fourth
/// partial of the upper notes lands in the top quarter of a 16 kHz
/// spectrum. The last note ends exactly at `duration_s`.
inline MidiScore synthetic_phrase(std::uint64_t seed, double duration_s = 4.0) {
  Rng rng(seed);
  MidiScore score;
  const double step = 0.25;
  double t = 0.0;
  while (t < duration_s - 1e-9) {
    const double len = std::min(step * static_cast<double>(1 + rng.below(3)), duration_s - t);
    const int pitch = 60 + static_cast<int>(rng.below(36));
    score.notes.push_back({pitch, t, len, 0, {}});
    if (rng.below(4) == 0 && pitch + 7 <= 95) score.notes.push_back({pitch + 7, t, len, 0, {}});
    t += len;
  }
  score.duration_s = duration_s;
  return score;
}

struct SyntheticEntry {
  std::filesystem::path midi_path;
  std::filesystem::path wav_path;
};

/// Writes pair{i}.mid / pair{i}.wav and a manifest.tsv naming them with
/// `label`. The WAV is rendered from the re-parsed MIDI so both sides see the
/// same tick-quantized timing. Returns the manifest path.
inline std::filesystem::path write_synthetic_corpus(const std::filesystem::path& dir, std::size_t count,
                                                    std::uint64_t seed, const std::string& label = "synth",
                                                    double duration_s = 4.0, int sample_rate = 16000) {
  std::filesystem::create_directories(dir);
  std::string manifest;
  for (std::size_t i = 0; i < count; ++i) {
    const auto midi = write_midi(synthetic_phrase(Rng::derive(seed, {i}).next_u64(), duration_s));
    const auto name = "pair" + std::to_string(i);
    write_file(dir / (name + ".mid"), midi);
    write_file(dir / (name + ".wav"), dsp::write_wav(render_additive(parse_midi(midi), sample_rate)));
    manifest += name + ".mid\t" + name + ".wav\t" + label + "\n";
  }
  write_text(dir / "manifest.tsv", manifest);
  return dir / "manifest.tsv";
}

}  // namespace perfnet
