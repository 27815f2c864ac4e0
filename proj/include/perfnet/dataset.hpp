#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "perfnet/dsp/stft.hpp"
#include "perfnet/dsp/wav.hpp"
#include "perfnet/error.hpp"
#include "perfnet/io.hpp"
#include "perfnet/matrix.hpp"
#include "perfnet/midi.hpp"
#include "perfnet/model.hpp"
#include "perfnet/pianoroll.hpp"

namespace perfnet {

struct ManifestEntry {
  std::filesystem::path midi_path;
  std::filesystem::path wav_path;
  std::string label;
};

struct Manifest {
  std::vector<ManifestEntry> entries;

  /// Distinct labels in order of first appearance.
  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    for (const auto& e : entries)
      if (std::find(out.begin(), out.end(), e.label) == out.end()) out.push_back(e.label);
    return out;
  }
};

/// One `midi<TAB>wav<TAB>label` entry per line. Blank lines and lines
/// starting with '#' are skipped; relative paths resolve against `base_dir`.
inline Manifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir = {}) {
  Manifest m;
  std::istringstream in(text);
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1)
      fields.push_back(line.substr(start, tab - start));
    fields.push_back(line.substr(start));
    const auto where = "line " + std::to_string(number);
    if (fields.size() != 3) throw InvalidManifest(where + ": expected 3 tab-separated fields, got " + std::to_string(fields.size()));
    if (fields[0].empty() || fields[1].empty()) throw InvalidManifest(where + ": empty path");
    if (fields[2].empty()) throw InvalidManifest(where + ": empty instrument label");
    auto resolve = [&](const std::string& p) {
      const std::filesystem::path path(p);
      return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
    };
    m.entries.push_back({resolve(fields[0]), resolve(fields[1]), fields[2]});
  }
  return m;
}

inline Manifest read_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_text(path), path.parent_path());
}

struct TrainingPair {
  Pianoroll roll;         // (P, T)
  Matrix<float> target;   // (F, T) magnitude
  std::size_t label = 0;  // index into Dataset::labels
  std::string source;

  std::size_t frames() const { return roll.num_frames(); }
};

struct Dataset {
  std::vector<std::string> labels;
  std::vector<TrainingPair> pairs;
};

/// Pairs a score with a recording: pianoroll at the model frame rate, mono
/// 16 kHz magnitude STFT, both truncated to the shorter length. Lengths that
/// differ by more than `tolerance` of the longer one are rejected.
inline TrainingPair align_pair(const MidiScore& score, const dsp::AudioBuffer& audio, std::size_t label,
                               const ModelConfig& config, std::string source, double tolerance = 0.05) {
  auto roll = score_to_pianoroll(score, config.frame_rate(), config.pitch_min, config.pitch_max).roll;
  const auto wave = audio.sample_rate == config.sample_rate ? audio : dsp::resample(audio, config.sample_rate);
  const auto spec = dsp::magnitude(dsp::stft(wave, config.geometry));

  const std::size_t t_roll = roll.num_frames(), t_spec = spec.values.cols();
  const std::size_t longer = std::max(t_roll, t_spec), shorter = std::min(t_roll, t_spec);
  if (static_cast<double>(longer - shorter) > tolerance * static_cast<double>(longer))
    throw AlignmentError(source + ": score has " + std::to_string(t_roll) + " frames, audio has " +
                         std::to_string(t_spec));

  TrainingPair p;
  p.roll = roll;
  p.roll.data = roll.data.slice_cols(0, shorter);
  p.target = spec.values.slice_cols(0, shorter).cast<float>();
  p.label = label;
  p.source = std::move(source);
  return p;
}

/// Builds aligned pairs for every manifest entry. Labels default to the
/// manifest's own; when given (e.g. from a checkpoint being resumed) every
/// entry's label must be among them.
inline Dataset build_dataset(const Manifest& manifest, const ModelConfig& config,
                             std::vector<std::string> labels = {}) {
  Dataset ds;
  ds.labels = labels.empty() ? manifest.labels() : std::move(labels);
  for (const auto& e : manifest.entries) {
    const auto index = static_cast<std::size_t>(
        std::find(ds.labels.begin(), ds.labels.end(), e.label) - ds.labels.begin());
    if (index == ds.labels.size()) throw InvalidManifest("unknown instrument label '" + e.label + "'");
    const auto source = e.midi_path.string() + " | " + e.wav_path.string();
    MidiScore score;
    dsp::AudioBuffer audio;
    try {
      score = parse_midi(read_file(e.midi_path));
    } catch (const Error& err) {
      rethrow_with_context(err, e.midi_path.string());
    }
    try {
      audio = dsp::read_wav(read_file(e.wav_path));
    } catch (const Error& err) {
      rethrow_with_context(err, e.wav_path.string());
    }
    ds.pairs.push_back(align_pair(score, audio, index, config, source));
  }
  return ds;
}

}  // namespace perfnet
