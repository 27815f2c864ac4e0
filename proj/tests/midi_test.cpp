#include <gtest/gtest.h>

#include <algorithm>

#include "oracles.hpp"
#include "perfnet/midi.hpp"
#include "perfnet/rng.hpp"

using namespace perfnet;

namespace {

bool same_notes_within(const std::vector<NoteEvent>& a, const std::vector<NoteEvent>& b, double tol) {
  if (a.size() != b.size()) return false;
  auto key = [](const NoteEvent& n) { return std::make_tuple(n.pitch, n.onset_s, n.duration_s); };
  auto sa = a, sb = b;
  std::sort(sa.begin(), sa.end(), [&](auto& x, auto& y) { return key(x) < key(y); });
  std::sort(sb.begin(), sb.end(), [&](auto& x, auto& y) { return key(x) < key(y); });
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (sa[i].pitch != sb[i].pitch) return false;
    if (std::abs(sa[i].onset_s - sb[i].onset_s) > tol) return false;
    if (std::abs(sa[i].offset_s() - sb[i].offset_s()) > tol) return false;
  }
  return true;
}

}  // namespace

TEST(ParseMidi, OneNoteDefaultTempo) {
  const auto score = parse_midi(oracle::one_note_smf());
  EXPECT_EQ(score.ticks_per_quarter, 480);
  ASSERT_EQ(score.tempo_map.size(), 1u);
  EXPECT_EQ(score.tempo_map[0], (TempoChange{0, 500000}));
  ASSERT_EQ(score.notes.size(), 1u);
  EXPECT_EQ(score.notes[0].pitch, 60);
  EXPECT_DOUBLE_EQ(score.notes[0].onset_s, 0.0);
  EXPECT_DOUBLE_EQ(score.notes[0].duration_s, 0.5);
  EXPECT_DOUBLE_EQ(score.duration_s, 0.5);
  EXPECT_TRUE(score.warnings.empty());
}

TEST(ParseMidi, EmptyTrack) {
  const auto score = parse_midi(oracle::smf(1, 96, {{0x00, 0xff, 0x2f, 0x00}}));
  EXPECT_TRUE(score.notes.empty());
  EXPECT_EQ(score.duration_s, 0.0);
}

TEST(ParseMidi, RunningStatusIsEquivalent) {
  // C4 and E4 chord then release; the second file omits repeated status bytes
  // and uses velocity-0 note-ons as note-offs.
  const std::vector<std::uint8_t> full{0x00, 0x90, 60, 90, 0x00, 0x90, 64, 90, 0x81, 0x70, 0x90, 60, 0,
                                       0x00, 0x90, 64, 0,  0x00, 0xff, 0x2f, 0x00};
  const std::vector<std::uint8_t> running{0x00, 0x90, 60, 90, 0x00, 64, 90, 0x81, 0x70, 60, 0,
                                          0x00, 64,   0,  0x00, 0xff, 0x2f, 0x00};
  const auto a = parse_midi(oracle::smf(0, 480, {full}));
  const auto b = parse_midi(oracle::smf(0, 480, {running}));
  ASSERT_EQ(a.notes.size(), 2u);
  EXPECT_EQ(a.notes, b.notes);
  EXPECT_DOUBLE_EQ(a.duration_s, b.duration_s);
  EXPECT_DOUBLE_EQ(a.notes[0].duration_s, 240.0 / 480 * 0.5);
}

TEST(ParseMidi, TempoMapAcrossTracks) {
  // Track 0: tempo 1 s/quarter at tick 0, 0.25 s/quarter at tick 480.
  const std::vector<std::uint8_t> conductor{0x00, 0xff, 0x51, 0x03, 0x0f, 0x42, 0x40,  // 1000000
                                            0x83, 0x60, 0xff, 0x51, 0x03, 0x03, 0xd0, 0x90,  // 250000
                                            0x00, 0xff, 0x2f, 0x00};
  // Track 1: note at tick 240 lasting until tick 960.
  const std::vector<std::uint8_t> melody{0x81, 0x70, 0x91, 67, 80, 0x85, 0x50, 0x81, 67, 0, 0x00, 0xff, 0x2f, 0x00};
  const auto s = parse_midi(oracle::smf(1, 480, {conductor, melody}));
  ASSERT_EQ(s.tempo_map.size(), 2u);
  EXPECT_EQ(s.tempo_map[1], (TempoChange{480, 250000}));
  ASSERT_EQ(s.notes.size(), 1u);
  EXPECT_EQ(s.notes[0].track, 1);
  EXPECT_DOUBLE_EQ(s.notes[0].onset_s, 0.5);           // 240 ticks at 1 s/q
  EXPECT_DOUBLE_EQ(s.notes[0].offset_s(), 1.0 + 0.25);  // 480 @1 s/q + 480 @0.25 s/q
}

TEST(ParseMidi, ProgramChangeAndSysexAndMeta) {
  const std::vector<std::uint8_t> t{0x00, 0xf0, 0x03, 0x7e, 0x7f, 0xf7,               // sysex
                                    0x00, 0xff, 0x03, 0x04, 'l', 'e', 'a', 'd',       // track name
                                    0x00, 0xc2, 40,                                   // program 40 on ch 2
                                    0x00, 0x92, 72, 100, 0x60, 0x82, 72, 64,          // note on/off ch 2
                                    0x00, 0xb0, 64, 127,                              // sustain (ignored)
                                    0x00, 0xff, 0x2f, 0x00};
  const auto s = parse_midi(oracle::smf(0, 96, {t}));
  ASSERT_EQ(s.notes.size(), 1u);
  EXPECT_EQ(s.notes[0].program, 40);
  EXPECT_DOUBLE_EQ(s.notes[0].duration_s, 0.5);
}

TEST(ParseMidi, OverlappingSamePitchPairsFirstInFirstOut) {
  const std::vector<std::uint8_t> t{0x00, 0x90, 60, 90, 0x60, 0x90, 60, 90, 0x60, 0x80, 60, 0,
                                    0x60, 0x80, 60, 0, 0x00, 0xff, 0x2f, 0x00};
  const auto s = parse_midi(oracle::smf(0, 96, {t}));
  ASSERT_EQ(s.notes.size(), 2u);
  EXPECT_DOUBLE_EQ(s.notes[0].onset_s, 0.0);
  EXPECT_DOUBLE_EQ(s.notes[0].offset_s(), 1.0);
  EXPECT_DOUBLE_EQ(s.notes[1].onset_s, 0.5);
  EXPECT_DOUBLE_EQ(s.notes[1].offset_s(), 1.5);
}

TEST(ParseMidi, DanglingNoteOnClosesAtEndOfTrackWithWarning) {
  const std::vector<std::uint8_t> t{0x00, 0x90, 62, 90, 0x83, 0x60, 0xff, 0x2f, 0x00};
  const auto s = parse_midi(oracle::smf(0, 480, {t}));
  ASSERT_EQ(s.notes.size(), 1u);
  EXPECT_DOUBLE_EQ(s.notes[0].duration_s, 0.5);
  ASSERT_EQ(s.warnings.size(), 1u);
  EXPECT_NE(s.warnings[0].find("DanglingNoteOn"), std::string::npos);
}

TEST(ParseMidi, Errors) {
  EXPECT_THROW(parse_midi(std::vector<std::uint8_t>{}), MalformedHeader);
  auto bad_magic = oracle::one_note_smf();
  bad_magic[0] = 'X';
  EXPECT_THROW(parse_midi(bad_magic), MalformedHeader);
  auto bad_len = oracle::one_note_smf();
  bad_len[7] = 2;
  EXPECT_THROW(parse_midi(bad_len), MalformedHeader);
  EXPECT_THROW(parse_midi(oracle::smf(2, 480, {{0x00, 0xff, 0x2f, 0x00}})), UnsupportedFormat);
  EXPECT_THROW(parse_midi(oracle::smf(0, 0xe728, {{0x00, 0xff, 0x2f, 0x00}})), UnsupportedFormat);
  auto truncated = oracle::one_note_smf();
  truncated.resize(truncated.size() - 6);
  EXPECT_THROW(parse_midi(truncated), MalformedTrack);
  EXPECT_THROW(parse_midi(oracle::smf(0, 480, {{0x00, 60, 90}})), MalformedTrack);  // running status with no status
}

TEST(ParseMidi, FuzzedInputsParseOrThrowTypedErrors) {
  Rng rng(2024);
  const std::vector<std::vector<std::uint8_t>> seeds{
      oracle::one_note_smf(),
      write_midi(parse_midi(oracle::smf(0, 480, {{0x00, 0x90, 60, 90, 0x00, 64, 90, 0x81, 0x70, 60, 0, 0x00, 64, 0,
                                                  0x00, 0xff, 0x2f, 0x00}})))};
  std::size_t parsed = 0, rejected = 0;
  for (int i = 0; i < 20000; ++i) {
    auto bytes = seeds[rng.below(seeds.size())];
    const int mutations = 1 + static_cast<int>(rng.below(4));
    for (int m = 0; m < mutations; ++m) {
      switch (rng.below(3)) {
        case 0: bytes[rng.below(bytes.size())] = static_cast<std::uint8_t>(rng.below(256)); break;
        case 1: bytes.resize(rng.below(bytes.size() + 1)); break;
        default: bytes.insert(bytes.begin() + static_cast<long>(rng.below(bytes.size() + 1)),
                              static_cast<std::uint8_t>(rng.below(256)));
      }
      if (bytes.empty()) break;
    }
    try {
      const auto s = parse_midi(bytes);
      for (const auto& n : s.notes) {
        ASSERT_GE(n.pitch, 0);
        ASSERT_LE(n.pitch, 127);
        ASSERT_GT(n.duration_s, 0.0);
        ASSERT_GE(n.onset_s, 0.0);
        ASSERT_GE(s.duration_s, n.offset_s() - 1e-12);
      }
      ++parsed;
    } catch (const Error&) {
      ++rejected;
    }
  }
  EXPECT_GT(parsed, 0u);
  EXPECT_GT(rejected, 0u);
}

TEST(WriteMidi, EmptyScore) {
  const auto bytes = write_midi(MidiScore{});
  const auto s = parse_midi(bytes);
  EXPECT_TRUE(s.notes.empty());
  // header + MTrk with tempo and end-of-track only
  EXPECT_EQ(bytes.size(), 14u + 8 + 7 + 4);
}

TEST(WriteMidi, OneNoteRoundTrip) {
  const auto original = parse_midi(oracle::one_note_smf());
  const auto back = parse_midi(write_midi(original));
  EXPECT_TRUE(same_notes_within(original.notes, back.notes, 0.0));
}

TEST(WriteMidi, RandomNotesRoundTripWithinOneTick) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(seed);
    MidiScore s;
    for (int i = 0; i < 100; ++i) {
      NoteEvent n;
      n.pitch = static_cast<int>(rng.below(128));
      n.onset_s = rng.uniform(0.0, 10.0);
      n.duration_s = rng.uniform(0.01, 2.0);
      s.notes.push_back(n);
      s.duration_s = std::max(s.duration_s, n.offset_s());
    }
    const auto back = parse_midi(write_midi(s));
    const double tick = 0.5 / 480;
    EXPECT_TRUE(same_notes_within(s.notes, back.notes, tick)) << seed;
    EXPECT_NEAR(back.duration_s, s.duration_s, tick);
  }
}

TEST(WriteMidi, OverlappingUnisonsSurvive) {
  MidiScore s;
  s.notes = {{60, 0.0, 2.0, 0, {}}, {60, 0.5, 0.5, 0, {}}, {60, 0.75, 1.0, 0, {}}};
  s.duration_s = 2.0;
  const auto back = parse_midi(write_midi(s));
  EXPECT_TRUE(same_notes_within(s.notes, back.notes, 0.5 / 480));
}
