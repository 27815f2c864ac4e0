#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "perfnet/error.hpp"

namespace perfnet {

struct NoteEvent {
  int pitch = 60;
  double onset_s = 0.0;
  double duration_s = 0.0;
  int track = 0;
  std::optional<int> program;

  double offset_s() const { return onset_s + duration_s; }
  bool operator==(const NoteEvent&) const = default;
};

struct TempoChange {
  std::uint64_t tick = 0;
  std::uint32_t us_per_quarter = 500000;
  bool operator==(const TempoChange&) const = default;
};

struct MidiScore {
  int ticks_per_quarter = 480;
  std::vector<TempoChange> tempo_map{TempoChange{}};
  std::vector<NoteEvent> notes;
  double duration_s = 0.0;
  /// Non-fatal conditions met while parsing (dangling note-ons, zero-length
  /// notes). Empty for well-formed files.
  std::vector<std::string> warnings;
};

namespace midi_detail {

constexpr std::uint32_t kDefaultTempo = 500000;
// Guards against absurd allocations driven by corrupt length fields.
constexpr std::size_t kMaxEventsPerTrack = 1u << 22;

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  bool done() const { return pos_ >= bytes_.size(); }

  template <typename E>
  std::uint8_t u8(const char* what) {
    if (pos_ >= bytes_.size()) throw E(std::string("unexpected end of data reading ") + what);
    return bytes_[pos_++];
  }
  template <typename E>
  std::uint32_t be(int n, const char* what) {
    std::uint32_t v = 0;
    for (int i = 0; i < n; ++i) v = (v << 8) | u8<E>(what);
    return v;
  }
  template <typename E>
  std::uint32_t vlq(const char* what) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      const std::uint8_t b = u8<E>(what);
      v = (v << 7) | (b & 0x7f);
      if (!(b & 0x80)) return v;
    }
    throw E(std::string("variable-length quantity longer than 4 bytes in ") + what);
  }
  template <typename E>
  void skip(std::size_t n, const char* what) {
    if (n > remaining()) throw E(std::string("length past end of data in ") + what);
    pos_ += n;
  }
  template <typename E>
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (n > remaining()) throw E(std::string("length past end of data in ") + what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

struct RawNote {
  std::uint64_t on_tick;
  std::uint64_t off_tick;
  int pitch;
  int track;
  std::optional<int> program;
};

inline bool tag_is(std::span<const std::uint8_t> b, const char* tag) {
  return b.size() == 4 && std::equal(b.begin(), b.end(), tag);
}

/// Seconds elapsed at `tick` under a sorted tempo map starting at tick 0.
inline double tick_to_seconds(std::uint64_t tick, const std::vector<TempoChange>& tempo,
                              int tpq) {
  double seconds = 0.0;
  for (std::size_t i = 0; i < tempo.size(); ++i) {
    const std::uint64_t start = tempo[i].tick;
    if (tick <= start) break;
    const std::uint64_t end =
        (i + 1 < tempo.size()) ? std::min<std::uint64_t>(tick, tempo[i + 1].tick) : tick;
    seconds += static_cast<double>(end - start) * tempo[i].us_per_quarter * 1e-6 / tpq;
  }
  return seconds;
}

inline void write_be(std::vector<std::uint8_t>& out, std::uint32_t v, int n) {
  for (int i = n - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void write_vlq(std::vector<std::uint8_t>& out, std::uint32_t v) {
  std::array<std::uint8_t, 5> buf{};
  int n = 0;
  buf[n++] = v & 0x7f;
  while (v >>= 7) buf[n++] = static_cast<std::uint8_t>(0x80 | (v & 0x7f));
  while (n) out.push_back(buf[--n]);
}

}  // namespace midi_detail

/// Parse a format 0 or 1 Standard MIDI File into tempo-resolved notes.
///
/// Note-ons with velocity > 0 are paired first-in first-out with the next
/// note-off (or velocity-0 note-on) of the same pitch on the same channel.
/// Running status, sysex and meta events are honored; controllers other than
/// tempo (including sustain) are ignored. Input velocities are discarded.
inline MidiScore parse_midi(std::span<const std::uint8_t> bytes) {
  using namespace midi_detail;
  Reader in(bytes);

  if (bytes.size() < 14 || !tag_is(bytes.subspan(0, 4), "MThd"))
    throw MalformedHeader("missing MThd chunk");
  in.skip<MalformedHeader>(4, "header");
  const std::uint32_t header_len = in.be<MalformedHeader>(4, "header length");
  if (header_len < 6 || header_len > in.remaining())
    throw MalformedHeader("bad header length " + std::to_string(header_len));
  const std::uint32_t format = in.be<MalformedHeader>(2, "format");
  const std::uint32_t ntracks = in.be<MalformedHeader>(2, "track count");
  const std::uint32_t division = in.be<MalformedHeader>(2, "division");
  in.skip<MalformedHeader>(header_len - 6, "header");

  if (format == 2) throw UnsupportedFormat("format 2 (independent sequences) is not supported");
  if (format > 2) throw MalformedHeader("unknown format " + std::to_string(format));
  if (division & 0x8000) throw UnsupportedFormat("SMPTE time division is not supported");
  if (division == 0) throw MalformedHeader("zero ticks per quarter note");

  MidiScore score;
  score.ticks_per_quarter = static_cast<int>(division);
  std::vector<TempoChange> tempo_events;
  std::vector<RawNote> raw;
  std::uint64_t last_tick = 0;

  for (std::uint32_t track = 0; track < ntracks; ++track) {
    if (in.done()) {
      score.warnings.push_back("header declares " + std::to_string(ntracks) +
                               " tracks but only " + std::to_string(track) + " present");
      break;
    }
    const auto tag = in.take<MalformedTrack>(4, "chunk tag");
    const std::uint32_t len = in.be<MalformedTrack>(4, "chunk length");
    auto body = in.take<MalformedTrack>(len, "chunk body");
    if (!tag_is(tag, "MTrk")) {  // alien chunk: skip, does not count as a track
      --track;
      continue;
    }

    Reader tr(body);
    std::uint64_t tick = 0;
    std::uint8_t status = 0;
    std::array<std::optional<int>, 16> program{};
    // (channel, pitch) -> queue of open note-on ticks
    std::map<std::pair<int, int>, std::deque<std::uint64_t>> open;
    std::size_t events = 0;

    while (!tr.done()) {
      if (++events > kMaxEventsPerTrack) throw MalformedTrack("too many events in track");
      tick += tr.vlq<MalformedTrack>("delta time");
      std::uint8_t b = tr.u8<MalformedTrack>("status");

      if (b == 0xff) {
        status = 0;
        const std::uint8_t type = tr.u8<MalformedTrack>("meta type");
        const std::uint32_t mlen = tr.vlq<MalformedTrack>("meta length");
        auto data = tr.take<MalformedTrack>(mlen, "meta data");
        if (type == 0x51 && mlen == 3) {
          const std::uint32_t us = (std::uint32_t{data[0]} << 16) | (data[1] << 8) | data[2];
          if (us > 0) tempo_events.push_back({tick, us});
        } else if (type == 0x2f) {
          break;
        }
        continue;
      }
      if (b == 0xf0 || b == 0xf7) {
        status = 0;
        tr.skip<MalformedTrack>(tr.vlq<MalformedTrack>("sysex length"), "sysex data");
        continue;
      }
      if (b >= 0xf0) throw MalformedTrack("unexpected system message in track");
      if (b >= 0x80) {
        status = b;
        b = tr.u8<MalformedTrack>("event data");
      } else if (status == 0) {
        throw MalformedTrack("running status without a prior status byte");
      }

      const int kind = status & 0xf0;
      const int channel = status & 0x0f;
      const std::uint8_t d1 = b;
      if (d1 & 0x80) throw MalformedTrack("data byte with high bit set");
      const bool two_bytes = kind != 0xc0 && kind != 0xd0;
      const std::uint8_t d2 = two_bytes ? tr.u8<MalformedTrack>("event data") : 0;
      if (d2 & 0x80) throw MalformedTrack("data byte with high bit set");

      if (kind == 0x90 && d2 > 0) {
        open[{channel, d1}].push_back(tick);
      } else if (kind == 0x80 || kind == 0x90) {
        auto it = open.find({channel, d1});
        if (it != open.end() && !it->second.empty()) {
          raw.push_back({it->second.front(), tick, d1, static_cast<int>(track), program[channel]});
          it->second.pop_front();
        }
      } else if (kind == 0xc0) {
        program[channel] = d1;
      }
    }
    for (auto& [key, ticks] : open) {
      for (auto on : ticks) {
        score.warnings.push_back("DanglingNoteOn: pitch " + std::to_string(key.second) +
                                 " on channel " + std::to_string(key.first) +
                                 " closed at end of track " + std::to_string(track));
        raw.push_back({on, tick, key.second, static_cast<int>(track), program[key.first]});
      }
    }
    last_tick = std::max(last_tick, tick);
  }

  std::stable_sort(tempo_events.begin(), tempo_events.end(),
                   [](const auto& a, const auto& b) { return a.tick < b.tick; });
  score.tempo_map.clear();
  score.tempo_map.push_back({0, kDefaultTempo});
  for (const auto& t : tempo_events) {
    if (t.tick == score.tempo_map.back().tick)
      score.tempo_map.back() = t;  // later event at the same tick wins
    else
      score.tempo_map.push_back(t);
  }

  const int tpq = score.ticks_per_quarter;
  std::stable_sort(raw.begin(), raw.end(), [](const RawNote& a, const RawNote& b) {
    return std::tie(a.on_tick, a.pitch) < std::tie(b.on_tick, b.pitch);
  });
  for (const auto& r : raw) {
    const double on = tick_to_seconds(r.on_tick, score.tempo_map, tpq);
    const double off = tick_to_seconds(r.off_tick, score.tempo_map, tpq);
    if (off <= on) {
      score.warnings.push_back("zero-length note at pitch " + std::to_string(r.pitch) + " dropped");
      continue;
    }
    score.notes.push_back({r.pitch, on, off - on, r.track, r.program});
    score.duration_s = std::max(score.duration_s, off);
  }
  score.duration_s =
      std::max(score.duration_s, tick_to_seconds(last_tick, score.tempo_map, tpq));
  return score;
}

/// Serialize to a format-0 SMF at the score's ticks_per_quarter and first
/// tempo. Overlapping notes of equal pitch are spread across channels so
/// that parse_midi pairs them back unambiguously.
inline std::vector<std::uint8_t> write_midi(const MidiScore& score) {
  using namespace midi_detail;
  const int tpq = score.ticks_per_quarter > 0 ? score.ticks_per_quarter : 480;
  const std::uint32_t tempo =
      score.tempo_map.empty() ? kDefaultTempo : score.tempo_map.front().us_per_quarter;
  const double ticks_per_second = tpq * 1e6 / tempo;
  auto to_tick = [&](double s) {
    return static_cast<std::uint64_t>(std::llround(std::max(0.0, s) * ticks_per_second));
  };

  struct Ev {
    std::uint64_t tick;
    int order;  // program changes, then note-offs, then note-ons at equal ticks
    std::uint8_t status, d1, d2;
  };
  std::vector<Ev> events;

  std::vector<const NoteEvent*> sorted;
  for (const auto& n : score.notes) sorted.push_back(&n);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](auto* a, auto* b) { return a->onset_s < b->onset_s; });

  // busy_until[channel][pitch]
  std::array<std::array<std::uint64_t, 128>, 16> busy_until{};
  std::array<std::optional<int>, 16> channel_program{};
  std::array<bool, 16> channel_used{};
  for (const NoteEvent* n : sorted) {
    const std::uint64_t on = to_tick(n->onset_s);
    const std::uint64_t off = std::max(on + 1, to_tick(n->onset_s + n->duration_s));
    const int pitch = std::clamp(n->pitch, 0, 127);
    int channel = -1;
    for (int c = 0; c < 16 && channel < 0; ++c) {
      if (c == 9) continue;  // GM percussion
      if (channel_used[c] && channel_program[c] != n->program) continue;
      if (busy_until[c][pitch] <= on) channel = c;
    }
    if (channel < 0) channel = 0;  // more than 15 simultaneous unisons; pairing degrades
    if (!channel_used[channel]) {
      channel_used[channel] = true;
      channel_program[channel] = n->program;
      if (n->program)
        events.push_back({0, 0, static_cast<std::uint8_t>(0xc0 | channel),
                          static_cast<std::uint8_t>(std::clamp(*n->program, 0, 127)), 0});
    }
    busy_until[channel][pitch] = off;
    events.push_back({on, 2, static_cast<std::uint8_t>(0x90 | channel),
                      static_cast<std::uint8_t>(pitch), 100});
    events.push_back({off, 1, static_cast<std::uint8_t>(0x80 | channel),
                      static_cast<std::uint8_t>(pitch), 0});
  }
  std::stable_sort(events.begin(), events.end(), [](const Ev& a, const Ev& b) {
    return std::tie(a.tick, a.order) < std::tie(b.tick, b.order);
  });

  std::vector<std::uint8_t> track;
  write_vlq(track, 0);
  track.insert(track.end(), {0xff, 0x51, 0x03});
  write_be(track, tempo, 3);
  std::uint64_t prev = 0;
  for (const auto& e : events) {
    write_vlq(track, static_cast<std::uint32_t>(e.tick - prev));
    prev = e.tick;
    track.push_back(e.status);
    track.push_back(e.d1);
    if ((e.status & 0xf0) != 0xc0) track.push_back(e.d2);
  }
  const std::uint64_t end_tick = std::max(prev, to_tick(score.duration_s));
  write_vlq(track, static_cast<std::uint32_t>(end_tick - prev));
  track.insert(track.end(), {0xff, 0x2f, 0x00});

  std::vector<std::uint8_t> out{'M', 'T', 'h', 'd'};
  write_be(out, 6, 4);
  write_be(out, 0, 2);
  write_be(out, 1, 2);
  write_be(out, static_cast<std::uint32_t>(tpq), 2);
  out.insert(out.end(), {'M', 'T', 'r', 'k'});
  write_be(out, static_cast<std::uint32_t>(track.size()), 4);
  out.insert(out.end(), track.begin(), track.end());
  return out;
}

}  // namespace perfnet
