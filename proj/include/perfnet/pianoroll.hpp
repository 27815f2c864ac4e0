#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "perfnet/error.hpp"
#include "perfnet/matrix.hpp"
#include "perfnet/midi.hpp"

namespace perfnet {

/// Binary pitch x time matrix. Row r is MIDI pitch pitch_min + r.
struct Pianoroll {
  int pitch_min = 0;
  int pitch_max = 127;
  double frame_rate = 62.5;
  Matrix<std::uint8_t> data;

  int num_pitches() const { return pitch_max - pitch_min + 1; }
  std::size_t num_frames() const { return data.cols(); }
  bool operator==(const Pianoroll&) const = default;
};

/// One maximal horizontal run of ones; offset_frame is exclusive.
struct NoteSpan {
  int pitch = 0;
  std::size_t onset_frame = 0;
  std::size_t offset_frame = 0;
  bool operator==(const NoteSpan&) const = default;
};

struct RollConversion {
  Pianoroll roll;
  std::size_t dropped_notes = 0;
};

namespace roll_detail {
// Frame-aligned times (k / frame_rate) quantize back to frame k.
constexpr double kFrameEps = 1e-9;
inline long long floor_frames(double seconds, double fr) {
  return static_cast<long long>(std::floor(seconds * fr + kFrameEps));
}
inline long long ceil_frames(double seconds, double fr) {
  return static_cast<long long>(std::ceil(seconds * fr - kFrameEps));
}
}  // namespace roll_detail

inline void check_roll_range(int pitch_min, int pitch_max) {
  if (pitch_min < 0 || pitch_max > 127 || pitch_min > pitch_max)
    throw InvalidRange("pitch range [" + std::to_string(pitch_min) + ", " +
                       std::to_string(pitch_max) + "] is not a non-empty subrange of 0..127");
}

/// Quantize notes onto a binary roll. A note covers frames
/// [floor(on*fr), max(floor(on*fr)+1, floor(off*fr))); notes outside the
/// pitch range are dropped and counted. An empty score yields one zero frame.
inline RollConversion score_to_pianoroll(const MidiScore& score, double frame_rate,
                                         int pitch_min = 0, int pitch_max = 127) {
  using roll_detail::ceil_frames;
  using roll_detail::floor_frames;
  if (!(frame_rate > 0) || !std::isfinite(frame_rate))
    throw InvalidRange("frame_rate must be positive");
  check_roll_range(pitch_min, pitch_max);

  double duration = std::max(0.0, score.duration_s);
  for (const auto& n : score.notes) duration = std::max(duration, n.onset_s + n.duration_s);
  const auto frames = static_cast<std::size_t>(std::max<long long>(1, ceil_frames(duration, frame_rate)));

  RollConversion out;
  out.roll.pitch_min = pitch_min;
  out.roll.pitch_max = pitch_max;
  out.roll.frame_rate = frame_rate;
  out.roll.data = Matrix<std::uint8_t>(static_cast<std::size_t>(pitch_max - pitch_min + 1), frames);
  for (const auto& n : score.notes) {
    if (n.pitch < pitch_min || n.pitch > pitch_max) {
      ++out.dropped_notes;
      continue;
    }
    const long long start = std::max<long long>(0, floor_frames(n.onset_s, frame_rate));
    const long long stop =
        std::max(start + 1, floor_frames(n.onset_s + n.duration_s, frame_rate));
    auto row = out.roll.data.row(static_cast<std::size_t>(n.pitch - pitch_min));
    for (long long t = start; t < stop && t < static_cast<long long>(frames); ++t)
      row[static_cast<std::size_t>(t)] = 1;
  }
  return out;
}

/// Maximal runs of ones, ordered by pitch then onset.
inline std::vector<NoteSpan> roll_to_spans(const Pianoroll& roll) {
  std::vector<NoteSpan> spans;
  for (std::size_t r = 0; r < roll.data.rows(); ++r) {
    const auto row = roll.data.row(r);
    std::size_t t = 0;
    while (t < row.size()) {
      if (!row[t]) {
        ++t;
        continue;
      }
      const std::size_t start = t;
      while (t < row.size() && row[t]) ++t;
      spans.push_back({roll.pitch_min + static_cast<int>(r), start, t});
    }
  }
  return spans;
}

inline MidiScore pianoroll_to_score(const Pianoroll& roll, std::optional<int> program = {}) {
  MidiScore score;
  const double fr = roll.frame_rate;
  for (const auto& s : roll_to_spans(roll)) {
    score.notes.push_back({s.pitch, static_cast<double>(s.onset_frame) / fr,
                           static_cast<double>(s.offset_frame - s.onset_frame) / fr, 0, program});
  }
  std::stable_sort(score.notes.begin(), score.notes.end(),
                   [](const NoteEvent& a, const NoteEvent& b) { return a.onset_s < b.onset_s; });
  score.duration_s = static_cast<double>(roll.num_frames()) / fr;
  return score;
}

/// Sparse JSON form shared with the HTTP API:
/// {"frame_rate", "pitch_min", "pitch_max", "num_frames", "notes": [{"pitch",
/// "onset_frame", "offset_frame"}]}. num_frames is optional on input.
inline nlohmann::json pianoroll_to_json(const Pianoroll& roll) {
  nlohmann::json notes = nlohmann::json::array();
  for (const auto& s : roll_to_spans(roll))
    notes.push_back({{"pitch", s.pitch}, {"onset_frame", s.onset_frame}, {"offset_frame", s.offset_frame}});
  return {{"frame_rate", roll.frame_rate},
          {"pitch_min", roll.pitch_min},
          {"pitch_max", roll.pitch_max},
          {"num_frames", roll.num_frames()},
          {"notes", std::move(notes)}};
}

/// Validates every field; InvalidPianoroll carries a "field: message" text.
inline Pianoroll pianoroll_from_json(const nlohmann::json& j) {
  auto fail = [](const std::string& field, const std::string& msg) -> void {
    throw InvalidPianoroll(field + ": " + msg);
  };
  if (!j.is_object()) fail("body", "expected a JSON object");
  for (const char* key : {"frame_rate", "pitch_min", "pitch_max", "notes"})
    if (!j.contains(key)) fail(key, "missing");
  if (!j["frame_rate"].is_number() || !(j["frame_rate"].get<double>() > 0))
    fail("frame_rate", "must be a positive number");
  if (!j["pitch_min"].is_number_integer()) fail("pitch_min", "must be an integer");
  if (!j["pitch_max"].is_number_integer()) fail("pitch_max", "must be an integer");
  if (!j["notes"].is_array()) fail("notes", "must be an array");

  Pianoroll roll;
  roll.frame_rate = j["frame_rate"].get<double>();
  roll.pitch_min = j["pitch_min"].get<int>();
  roll.pitch_max = j["pitch_max"].get<int>();
  if (roll.pitch_min < 0 || roll.pitch_min > 127) fail("pitch_min", "must be within 0..127");
  if (roll.pitch_max < roll.pitch_min || roll.pitch_max > 127)
    fail("pitch_max", "must be within pitch_min..127");

  std::vector<NoteSpan> spans;
  std::size_t frames = 1;
  const auto& notes = j["notes"];
  for (std::size_t i = 0; i < notes.size(); ++i) {
    const auto& n = notes[i];
    const std::string where = "notes[" + std::to_string(i) + "]";
    if (!n.is_object()) fail(where, "expected an object");
    for (const char* key : {"pitch", "onset_frame", "offset_frame"})
      if (!n.contains(key) || !n[key].is_number_integer()) fail(where + "." + key, "must be an integer");
    const auto pitch = n["pitch"].get<long long>();
    const auto on = n["onset_frame"].get<long long>();
    const auto off = n["offset_frame"].get<long long>();
    if (pitch < roll.pitch_min || pitch > roll.pitch_max)
      fail(where + ".pitch", "outside [pitch_min, pitch_max]");
    if (on < 0) fail(where + ".onset_frame", "must be non-negative");
    if (off <= on) fail(where + ".offset_frame", "must be greater than onset_frame");
    if (off > (1LL << 24)) fail(where + ".offset_frame", "exceeds the maximum roll length");
    spans.push_back({static_cast<int>(pitch), static_cast<std::size_t>(on), static_cast<std::size_t>(off)});
    frames = std::max(frames, static_cast<std::size_t>(off));
  }
  if (j.contains("num_frames")) {
    const auto& nf = j["num_frames"];
    if (!nf.is_number_integer() || nf.get<long long>() < 1 || nf.get<long long>() > (1LL << 24))
      fail("num_frames", "must be a positive integer");
    if (static_cast<std::size_t>(nf.get<long long>()) < frames)
      fail("num_frames", "shorter than the last note offset");
    frames = static_cast<std::size_t>(nf.get<long long>());
  }
  roll.data = Matrix<std::uint8_t>(static_cast<std::size_t>(roll.num_pitches()), frames);
  for (const auto& s : spans) {
    auto row = roll.data.row(static_cast<std::size_t>(s.pitch - roll.pitch_min));
    for (std::size_t t = s.onset_frame; t < s.offset_frame; ++t) row[t] = 1;
  }
  return roll;
}

/// Re-slice a roll to another pitch range; rows outside the source are zero.
inline Pianoroll with_pitch_range(const Pianoroll& roll, int pitch_min, int pitch_max) {
  check_roll_range(pitch_min, pitch_max);
  Pianoroll out{pitch_min, pitch_max, roll.frame_rate,
                Matrix<std::uint8_t>(static_cast<std::size_t>(pitch_max - pitch_min + 1), roll.num_frames())};
  for (int p = std::max(pitch_min, roll.pitch_min); p <= std::min(pitch_max, roll.pitch_max); ++p) {
    auto src = roll.data.row(static_cast<std::size_t>(p - roll.pitch_min));
    std::copy(src.begin(), src.end(), out.data.row(static_cast<std::size_t>(p - pitch_min)).begin());
  }
  return out;
}

}  // namespace perfnet
