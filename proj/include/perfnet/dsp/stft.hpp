#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <optional>
#include <vector>

#include "perfnet/dsp/fft.hpp"
#include "perfnet/error.hpp"
#include "perfnet/matrix.hpp"

namespace perfnet::dsp {

struct AudioBuffer {
  int sample_rate = 16000;
  std::vector<double> samples;

  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
};

struct StftGeometry {
  std::size_t n_fft = 1024;
  std::size_t hop = 256;

  std::size_t num_bins() const { return n_fft / 2 + 1; }
  std::size_t num_frames(std::size_t num_samples) const { return num_samples / hop + 1; }
  double frame_rate(int sample_rate) const { return static_cast<double>(sample_rate) / hop; }
  bool operator==(const StftGeometry&) const = default;
};

struct ComplexSpectrogram {
  StftGeometry geometry;
  Matrix<std::complex<double>> bins;  // (F, T)
};

struct Spectrogram {
  StftGeometry geometry;
  Matrix<double> values;  // (F, T), non-negative
};

inline void check_geometry(const StftGeometry& g) {
  if (!is_power_of_two(g.n_fft) || g.n_fft < 2)
    throw InvalidGeometry("n_fft must be a power of two >= 2, got " + std::to_string(g.n_fft));
  if (g.hop == 0 || g.hop > g.n_fft)
    throw InvalidGeometry("hop must satisfy 0 < hop <= n_fft, got " + std::to_string(g.hop));
}

/// Periodic Hann window.
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

/// Index into a signal of length `len` after reflect-padding (no edge repeat),
/// bouncing as many times as needed for short signals.
inline std::size_t reflect_index(long long i, std::size_t len) {
  if (len == 1) return 0;
  const long long period = 2 * (static_cast<long long>(len) - 1);
  long long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<long long>(len) ? m : period - m);
}

/// Centered STFT: the signal is reflect-padded by n_fft/2 on both sides so
/// frame t is centered on sample t*hop. T = floor(len/hop) + 1.
inline ComplexSpectrogram stft(const AudioBuffer& audio, StftGeometry g = {}) {
  check_geometry(g);
  const std::size_t len = audio.samples.size();
  const std::size_t frames = g.num_frames(len);
  const std::size_t bins = g.num_bins();
  const long long half = static_cast<long long>(g.n_fft / 2);
  const auto window = hann_window(g.n_fft);
  const Fft& fft = Fft::plan(g.n_fft);

  ComplexSpectrogram out{g, Matrix<std::complex<double>>(bins, frames)};
  std::vector<std::complex<double>> buf(g.n_fft);
  for (std::size_t t = 0; t < frames; ++t) {
    const long long start = static_cast<long long>(t * g.hop) - half;
    for (std::size_t n = 0; n < g.n_fft; ++n) {
      const double x = len == 0 ? 0.0 : audio.samples[reflect_index(start + static_cast<long long>(n), len)];
      buf[n] = {window[n] * x, 0.0};
    }
    fft.transform(buf);
    for (std::size_t k = 0; k < bins; ++k) out.bins(k, t) = buf[k];
  }
  return out;
}

/// Least-squares inverse of `stft`: windowed overlap-add normalized by the
/// summed squared window, with the reflect-padded margins folded back onto
/// the samples they mirror. Exact inverse on consistent spectrograms.
/// `length` defaults to (T-1)*hop and must map back to T frames.
inline AudioBuffer istft(const ComplexSpectrogram& spec, int sample_rate = 16000,
                         std::optional<std::size_t> length = {}) {
  const StftGeometry& g = spec.geometry;
  check_geometry(g);
  if (g.hop * 4 != g.n_fft)
    throw InvalidGeometry("inverse STFT requires hop = n_fft/4 with the Hann window");
  if (spec.bins.rows() != g.num_bins())
    throw InvalidGeometry("bin count does not match n_fft/2+1");
  const std::size_t frames = spec.bins.cols();
  if (frames == 0) throw InvalidGeometry("spectrogram has no frames");
  const std::size_t len = length.value_or((frames - 1) * g.hop);
  if (g.num_frames(len) != frames)
    throw InvalidGeometry("signal length " + std::to_string(len) + " inconsistent with " +
                          std::to_string(frames) + " frames");

  const std::size_t half = g.n_fft / 2;
  const std::size_t padded = len + 2 * half;
  const auto window = hann_window(g.n_fft);
  const Fft& fft = Fft::plan(g.n_fft);
  const double scale = 1.0 / static_cast<double>(g.n_fft);

  std::vector<double> num(padded, 0.0), den(padded, 0.0);
  std::vector<std::complex<double>> buf(g.n_fft);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t k = 0; k < g.num_bins(); ++k) buf[k] = spec.bins(k, t);
    // Hermitian extension; DC and Nyquist imaginary parts do not survive a real signal.
    buf[0] = {buf[0].real(), 0.0};
    buf[half] = {buf[half].real(), 0.0};
    for (std::size_t k = half + 1; k < g.n_fft; ++k) buf[k] = std::conj(buf[g.n_fft - k]);
    fft.transform(buf, true);
    const std::size_t start = t * g.hop;
    for (std::size_t n = 0; n < g.n_fft; ++n) {
      num[start + n] += window[n] * buf[n].real() * scale;
      den[start + n] += window[n] * window[n];
    }
  }

  AudioBuffer out{sample_rate, std::vector<double>(len, 0.0)};
  if (len == 0) return out;
  std::vector<double> fold_num(len, 0.0), fold_den(len, 0.0);
  for (std::size_t p = 0; p < padded; ++p) {
    const std::size_t src = reflect_index(static_cast<long long>(p) - static_cast<long long>(half), len);
    fold_num[src] += num[p];
    fold_den[src] += den[p];
  }
  for (std::size_t i = 0; i < len; ++i)
    out.samples[i] = fold_den[i] > 1e-12 ? fold_num[i] / fold_den[i] : 0.0;
  return out;
}

inline Spectrogram magnitude(const ComplexSpectrogram& spec) {
  Spectrogram out{spec.geometry, Matrix<double>(spec.bins.rows(), spec.bins.cols())};
  const auto* in = spec.bins.data();
  auto* o = out.values.data();
  for (std::size_t i = 0; i < spec.bins.size(); ++i) o[i] = std::hypot(in[i].real(), in[i].imag());
  return out;
}

}  // namespace perfnet::dsp
