#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <vector>

#include "perfnet/dsp/stft.hpp"
#include "perfnet/rng.hpp"

namespace perfnet::dsp {

struct GriffinLimResult {
  AudioBuffer audio;
  /// errors[i] = || |stft(x_i)| - mag ||_F / ||mag||_F for every iterate x_i,
  /// including the random-phase start (so errors.size() == iterations + 1).
  std::vector<double> errors;
};

namespace gl_detail {
inline double spectral_error(const ComplexSpectrogram& c, const Matrix<double>& mag, double mag_norm) {
  if (mag_norm == 0.0) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < mag.size(); ++i) {
    const double d = std::abs(c.bins.data()[i]) - mag.data()[i];
    acc += d * d;
  }
  return std::sqrt(acc) / mag_norm;
}
}  // namespace gl_detail

/// Classic Griffin-Lim phase reconstruction from a magnitude spectrogram.
/// Phase starts as seeded uniform noise in [-pi, pi); each iteration
/// resynthesizes and re-reads the phase of the consistent spectrogram.
inline GriffinLimResult griffin_lim(const Spectrogram& mag, int iterations = 60, std::uint64_t seed = 0,
                                    int sample_rate = 16000) {
  check_geometry(mag.geometry);
  if (iterations < 0) throw InvalidGeometry("iterations must be >= 0");
  const std::size_t rows = mag.values.rows();
  const std::size_t cols = mag.values.cols();

  double mag_norm = 0.0;
  for (double v : mag.values.storage()) mag_norm += v * v;
  mag_norm = std::sqrt(mag_norm);

  Rng rng(seed);
  ComplexSpectrogram est{mag.geometry, Matrix<std::complex<double>>(rows, cols)};
  for (std::size_t i = 0; i < mag.values.size(); ++i)
    est.bins.data()[i] = std::polar(mag.values.data()[i], rng.uniform(-std::numbers::pi, std::numbers::pi));

  GriffinLimResult result;
  result.audio = istft(est, sample_rate);
  auto consistent = stft(result.audio, mag.geometry);
  result.errors.push_back(gl_detail::spectral_error(consistent, mag.values, mag_norm));
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < mag.values.size(); ++i) {
      const auto c = consistent.bins.data()[i];
      const double a = std::abs(c);
      const auto phase = a > 0.0 ? c / a : std::complex<double>(1.0, 0.0);
      est.bins.data()[i] = mag.values.data()[i] * phase;
    }
    result.audio = istft(est, sample_rate);
    consistent = stft(result.audio, mag.geometry);
    result.errors.push_back(gl_detail::spectral_error(consistent, mag.values, mag_norm));
  }
  return result;
}

}  // namespace perfnet::dsp
