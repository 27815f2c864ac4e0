#include <gtest/gtest.h>

#include "oracles.hpp"
#include "perfnet/dsp/wav.hpp"
#include "perfnet/pipeline.hpp"
#include "tiny.hpp"

using namespace perfnet;

TEST(Synthesize, OneNoteDurationLaw) {
  const auto model = model_init<float>(ModelConfig{}, {"violin", "flute"}, 1);
  const auto roll = score_to_pianoroll(parse_midi(oracle::one_note_smf()), 62.5).roll;
  const auto r = synthesize(model, roll, 1, {8, 0});
  EXPECT_EQ(r.frames, 32u);
  EXPECT_EQ(r.audio.samples.size(), 31u * 256);
  EXPECT_LE(std::abs(r.duration_s() - 32 / 62.5), 256.0 / 16000 + 1e-12);
  EXPECT_EQ(r.audio.sample_rate, 16000);
  for (double v : r.audio.samples) ASSERT_TRUE(std::isfinite(v));
  const auto back = dsp::read_wav(dsp::write_wav(r.audio));
  EXPECT_EQ(back.samples.size(), r.audio.samples.size());
  EXPECT_GE(r.timings.contour_ms, 0.0);
  EXPECT_GE(r.timings.total_ms(), r.timings.griffin_lim_ms);
}

TEST(Synthesize, ZeroIterationsStillRenders) {
  const auto model = model_init<float>(tiny::config(), {"a"}, 1);
  Pianoroll roll{60, 75, 62.5, Matrix<std::uint8_t>(16, 20)};
  roll.data(3, 5) = 1;
  const auto r = synthesize(model, roll, 0, {0, 0});
  EXPECT_EQ(r.audio.samples.size(), 19u * 16);
  EXPECT_EQ(r.audio.sample_rate, 1000);
}

TEST(Synthesize, DeterministicForSeed) {
  const auto model = model_init<float>(tiny::config(), {"a"}, 1);
  const Pianoroll roll{0, 127, 62.5, Matrix<std::uint8_t>(128, 20, 1)};
  EXPECT_EQ(synthesize(model, roll, 0, {5, 3}).audio.samples, synthesize(model, roll, 0, {5, 3}).audio.samples);
}

TEST(Synthesize, ConformsPitchRangeAndFrameRate) {
  const auto model = model_init<float>(tiny::config(), {"a"}, 1);
  Pianoroll roll{0, 127, 31.25, Matrix<std::uint8_t>(128, 10)};
  roll.data(62, 0) = roll.data(62, 1) = 1;
  const auto r = conform_roll(model, roll);
  EXPECT_EQ(r.pitch_min, 60);
  EXPECT_EQ(r.num_pitches(), 16);
  EXPECT_EQ(r.num_frames(), 20u);
  for (std::size_t t = 0; t < 20; ++t) EXPECT_EQ(r.data(2, t), t < 4 ? 1 : 0) << t;
}

TEST(ResolveInstrument, DefaultsAndUnknownLabels) {
  const auto model = model_init<float>(tiny::config(), {"violin", "flute"}, 1);
  EXPECT_EQ(resolve_instrument(model, ""), 0u);
  EXPECT_EQ(resolve_instrument(model, "flute"), 1u);
  try {
    resolve_instrument(model, "tuba");
    FAIL();
  } catch (const UnknownInstrument& e) {
    EXPECT_NE(e.detail().find("violin, flute"), std::string::npos);
  }
}
