#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "perfnet/dsp/griffin_lim.hpp"
#include "perfnet/dsp/stft.hpp"
#include "perfnet/dsp/wav.hpp"
#include "perfnet/rng.hpp"

using namespace perfnet;
using namespace perfnet::dsp;

namespace {

AudioBuffer noise(std::size_t n, std::uint64_t seed, int sr = 16000) {
  Rng rng(seed);
  AudioBuffer a{sr, std::vector<double>(n)};
  for (auto& v : a.samples) v = rng.uniform(-1.0, 1.0);
  return a;
}

AudioBuffer sine(double hz, std::size_t n, int sr = 16000, double amp = 1.0) {
  AudioBuffer a{sr, std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) a.samples[i] = amp * std::sin(2 * std::numbers::pi * hz * i / sr);
  return a;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b, std::size_t from = 0,
                    std::size_t to = SIZE_MAX) {
  double m = 0;
  for (std::size_t i = from; i < std::min({a.size(), b.size(), to}); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(Stft, ZeroSignalGivesZeroBins) {
  for (StftGeometry g : {StftGeometry{1024, 256}, StftGeometry{64, 16}, StftGeometry{256, 256}}) {
    const auto s = stft(AudioBuffer{16000, std::vector<double>(3000, 0.0)}, g);
    EXPECT_EQ(s.bins.rows(), g.n_fft / 2 + 1);
    EXPECT_EQ(s.bins.cols(), 3000 / g.hop + 1);
    for (const auto& v : s.bins.storage()) ASSERT_EQ(v, std::complex<double>(0.0, 0.0));
  }
}

TEST(Stft, MatchesNaiveDft) {
  const auto x = noise(1024, 42);
  const auto start = std::chrono::steady_clock::now();
  const auto fast = stft(x, {1024, 256});
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const auto slow = oracle::naive_stft(x.samples, 1024, 256);
  ASSERT_EQ(fast.bins.cols(), slow.size());
  double worst = 0;
  for (std::size_t t = 0; t < slow.size(); ++t)
    for (std::size_t k = 0; k < 513; ++k) worst = std::max(worst, std::abs(fast.bins(k, t) - slow[t][k]));
  EXPECT_LE(worst, 1e-6);
  EXPECT_LT(seconds, 5.0);
}

TEST(Stft, ShortSignalsReflectCorrectly) {
  for (std::size_t n : {1u, 2u, 5u, 100u, 600u}) {
    const auto x = noise(n, n);
    const auto fast = stft(x, {64, 16});
    const auto slow = oracle::naive_stft(x.samples, 64, 16);
    double worst = 0;
    for (std::size_t t = 0; t < slow.size(); ++t)
      for (std::size_t k = 0; k < 33; ++k) worst = std::max(worst, std::abs(fast.bins(k, t) - slow[t][k]));
    EXPECT_LE(worst, 1e-9) << n;
  }
}

TEST(Stft, SinusoidPeaksAtItsBin) {
  const auto x = sine(16.0 * 16000 / 1024, 16000);
  const auto mag = magnitude(stft(x, {1024, 256}));
  for (std::size_t t = 4; t + 4 < mag.values.cols(); ++t) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < 513; ++k)
      if (mag.values(k, t) > mag.values(best, t)) best = k;
    EXPECT_EQ(best, 16u) << "frame " << t;
  }
}

TEST(Stft, Linearity) {
  const auto x = noise(5000, 1), y = noise(5000, 2);
  AudioBuffer mix{16000, std::vector<double>(5000)};
  for (std::size_t i = 0; i < 5000; ++i) mix.samples[i] = 0.3 * x.samples[i] - 1.7 * y.samples[i];
  const auto sx = stft(x), sy = stft(y), sm = stft(mix);
  double worst = 0;
  for (std::size_t i = 0; i < sm.bins.size(); ++i)
    worst = std::max(worst, std::abs(sm.bins.data()[i] - (0.3 * sx.bins.data()[i] - 1.7 * sy.bins.data()[i])));
  EXPECT_LE(worst, 1e-6);
}

TEST(Stft, InvalidGeometry) {
  const auto x = noise(100, 1);
  EXPECT_THROW(stft(x, {1000, 250}), InvalidGeometry);
  EXPECT_THROW(stft(x, {1024, 0}), InvalidGeometry);
  EXPECT_THROW(stft(x, {1024, 2048}), InvalidGeometry);
}

TEST(Istft, ZeroSpectrogramGivesZeroSignal) {
  ComplexSpectrogram z{{1024, 256}, Matrix<std::complex<double>>(513, 20)};
  const auto a = istft(z);
  EXPECT_EQ(a.samples.size(), 19u * 256);
  for (double v : a.samples) ASSERT_EQ(v, 0.0);
}

TEST(Istft, RoundTripNoise) {
  const auto x = noise(16000, 7);
  const auto y = istft(stft(x), 16000, x.samples.size());
  EXPECT_LT(max_abs_diff(x.samples, y.samples), 1e-6);
  // Default length (T-1)*hop covers the un-padded interior.
  const auto interior = istft(stft(x));
  EXPECT_EQ(interior.samples.size(), (16000 / 256) * 256u);
  EXPECT_LT(max_abs_diff(x.samples, interior.samples, 512, interior.samples.size() - 512), 1e-6);
}

TEST(Istft, RoundTripSine) {
  const auto x = sine(440.0, 16000);
  const auto y = istft(stft(x), 16000, x.samples.size());
  EXPECT_LT(max_abs_diff(x.samples, y.samples), 1e-6);
}

TEST(Istft, RejectsNonColaGeometry) {
  const auto s = stft(noise(2048, 3), {1024, 512});
  EXPECT_THROW(istft(s), InvalidGeometry);
}

TEST(Magnitude, Pythagorean) {
  ComplexSpectrogram s{{4, 1}, Matrix<std::complex<double>>(3, 1)};
  s.bins(1, 0) = {3.0, 4.0};
  const auto m = magnitude(s);
  EXPECT_EQ(m.values(0, 0), 0.0);
  EXPECT_EQ(m.values(1, 0), 5.0);
}

TEST(Magnitude, MatchesElementwiseOracle) {
  Rng rng(5);
  ComplexSpectrogram s{{64, 16}, Matrix<std::complex<double>>(33, 50)};
  for (auto& v : s.bins.storage()) v = {rng.uniform(-100, 100), rng.uniform(-100, 100)};
  const auto m = magnitude(s);
  for (std::size_t i = 0; i < s.bins.size(); ++i) {
    const auto c = s.bins.data()[i];
    ASSERT_NEAR(m.values.data()[i], std::sqrt(c.real() * c.real() + c.imag() * c.imag()), 1e-7);
    ASSERT_GE(m.values.data()[i], 0.0);
  }
}

TEST(GriffinLim, ZeroMagnitudeGivesSilence) {
  Spectrogram z{{1024, 256}, Matrix<double>(513, 10)};
  for (int iters : {0, 3}) {
    const auto r = griffin_lim(z, iters, 1);
    for (double v : r.audio.samples) ASSERT_EQ(v, 0.0);
  }
}

TEST(GriffinLim, TwoHarmonicConvergesMonotonically) {
  AudioBuffer x{16000, std::vector<double>(16000)};
  for (std::size_t i = 0; i < x.samples.size(); ++i)
    x.samples[i] = 0.5 * std::sin(2 * std::numbers::pi * 440.0 * i / 16000) +
                   0.3 * std::sin(2 * std::numbers::pi * 880.0 * i / 16000);
  const auto mag = magnitude(stft(x));
  const auto r = griffin_lim(mag, 60, 1234);
  ASSERT_EQ(r.errors.size(), 61u);
  for (std::size_t i = 1; i < r.errors.size(); ++i) EXPECT_LE(r.errors[i], r.errors[i - 1] + 1e-7) << i;
  EXPECT_LT(r.errors.back(), 0.2);

  const auto again = griffin_lim(mag, 60, 1234);
  EXPECT_EQ(again.audio.samples, r.audio.samples);
  EXPECT_EQ(again.errors, r.errors);
}

TEST(GriffinLim, ZeroIterationsIsSeededRandomPhase) {
  const auto mag = magnitude(stft(noise(4000, 9)));
  const auto a = griffin_lim(mag, 0, 77), b = griffin_lim(mag, 0, 77), c = griffin_lim(mag, 0, 78);
  EXPECT_EQ(a.audio.samples, b.audio.samples);
  EXPECT_NE(a.audio.samples, c.audio.samples);
  EXPECT_EQ(a.audio.samples.size(), (mag.values.cols() - 1) * 256);
}

TEST(Wav, SilenceRoundTrip) {
  const AudioBuffer silence{16000, std::vector<double>(16000, 0.0)};
  const auto bytes = write_wav(silence);
  ASSERT_EQ(bytes.size(), 44u + 32000);
  const auto back = read_wav(bytes);
  EXPECT_EQ(back.sample_rate, 16000);
  ASSERT_EQ(back.samples.size(), 16000u);
  for (double v : back.samples) ASSERT_EQ(v, 0.0);
}

TEST(Wav, FullScaleSineWithinOneStep) {
  const auto x = sine(440.0, 8000);
  const auto back = read_wav(write_wav(x));
  EXPECT_LE(max_abs_diff(x.samples, back.samples), 1.0 / 32768);
}

TEST(Wav, HeaderLayoutIsCanonical) {
  const auto bytes = write_wav(AudioBuffer{22050, std::vector<double>(3, 0.5)});
  const std::vector<std::uint8_t> header{
      'R', 'I', 'F', 'F', 42, 0, 0, 0, 'W', 'A', 'V', 'E', 'f', 'm', 't', ' ', 16, 0, 0, 0, 1, 0, 1, 0,
      0x22, 0x56, 0, 0, 0x44, 0xac, 0, 0, 2, 0, 16, 0, 'd', 'a', 't', 'a', 6, 0, 0, 0};
  EXPECT_EQ(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 44), header);
  EXPECT_EQ(bytes[44], 0x00);
  EXPECT_EQ(bytes[45], 0x40);  // 0.5 * 32768 = 0x4000
}

TEST(Wav, TruncatedHeaderIsMalformed) {
  const auto bytes = write_wav(AudioBuffer{16000, std::vector<double>(10, 0.1)});
  for (std::size_t n : {0u, 4u, 11u, 20u, 30u})
    EXPECT_THROW(read_wav(std::span(bytes.data(), n)), MalformedRiff) << n;
}

TEST(Wav, ReadsStereoFloat) {
  std::vector<std::uint8_t> b{'R', 'I', 'F', 'F', 0, 0, 0, 0, 'W', 'A', 'V', 'E', 'f', 'm', 't', ' ', 16, 0, 0, 0,
                              3, 0, 2, 0, 0x80, 0x3e, 0, 0, 0, 0, 0, 0, 8, 0, 32, 0, 'd', 'a', 't', 'a', 8, 0, 0, 0};
  const float l = 0.25f, r = -0.75f;
  for (float f : {l, r}) {
    std::uint8_t raw[4];
    std::memcpy(raw, &f, 4);
    b.insert(b.end(), raw, raw + 4);
  }
  const auto a = read_wav(b);
  EXPECT_EQ(a.sample_rate, 16000);
  ASSERT_EQ(a.samples.size(), 1u);
  EXPECT_DOUBLE_EQ(a.samples[0], -0.25);
}

TEST(Wav, RejectsUnsupportedCodec) {
  auto bytes = write_wav(AudioBuffer{16000, std::vector<double>(4, 0.0)});
  bytes[34] = 8;  // 8-bit PCM
  EXPECT_THROW(read_wav(bytes), UnsupportedCodec);
  bytes = write_wav(AudioBuffer{16000, std::vector<double>(4, 0.0)});
  bytes[22] = 6;  // six channels
  EXPECT_THROW(read_wav(bytes), UnsupportedCodec);
}

TEST(Resample, SameRateIsIdentity) {
  const auto x = noise(1000, 4, 44100);
  const auto y = resample(x, 44100);
  EXPECT_EQ(y.samples, x.samples);
}

TEST(Resample, ConstantStaysConstant) {
  const AudioBuffer x{44100, std::vector<double>(44100, 0.5)};
  const auto y = resample(x, 16000);
  EXPECT_EQ(y.sample_rate, 16000);
  EXPECT_EQ(y.samples.size(), 16000u);
  for (double v : y.samples) ASSERT_NEAR(v, 0.5, 1e-15);
}

TEST(Resample, LengthLaw) {
  EXPECT_EQ(resample(noise(1001, 1, 44100), 16000).samples.size(),
            static_cast<std::size_t>(std::llround(1001.0 * 16000 / 44100)));
  EXPECT_EQ(resample(noise(10, 1, 8000), 16000).samples.size(), 20u);
}

TEST(Resample, SinePeakStaysAtFrequency) {
  const auto y = resample(sine(100.0, 44100, 44100), 16000);
  const auto mag = magnitude(stft(y));
  std::vector<double> total(513, 0.0);
  for (std::size_t k = 0; k < 513; ++k)
    for (std::size_t t = 0; t < mag.values.cols(); ++t) total[k] += mag.values(k, t);
  const auto best = static_cast<double>(std::max_element(total.begin(), total.end()) - total.begin());
  EXPECT_LE(std::abs(best - 100.0 / (16000.0 / 1024)), 1.0);
}
