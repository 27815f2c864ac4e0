#pragma once

// Independent reference implementations used only by the test suites.

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <span>
#include <vector>

#include "perfnet/matrix.hpp"
#include "perfnet/nn/params.hpp"

namespace oracle {

/// O(n^2) DFT of a centered, reflect-padded, Hann-windowed frame sequence,
/// written directly from the textbook definition.
inline std::vector<std::vector<std::complex<double>>> naive_stft(const std::vector<double>& x, std::size_t n_fft,
                                                                 std::size_t hop) {
  const long long len = static_cast<long long>(x.size());
  const long long half = static_cast<long long>(n_fft / 2);
  auto padded_at = [&](long long i) {
    // numpy-style "reflect": ... x2 x1 | x0 x1 x2 ... x_{n-1} | x_{n-2} ...
    if (len == 1) return x[0];
    while (i < 0 || i >= len) {
      if (i < 0) i = -i;
      if (i >= len) i = 2 * (len - 1) - i;
    }
    return x[static_cast<std::size_t>(i)];
  };
  const std::size_t frames = x.size() / hop + 1;
  std::vector<std::vector<std::complex<double>>> out(frames, std::vector<std::complex<double>>(n_fft / 2 + 1));
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t k = 0; k <= n_fft / 2; ++k) {
      std::complex<double> acc = 0.0;
      for (std::size_t n = 0; n < n_fft; ++n) {
        const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / n_fft);
        const double v = padded_at(static_cast<long long>(t * hop + n) - half);
        const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * n % n_fft) / n_fft;
        acc += w * v * std::complex<double>(std::cos(ang), std::sin(ang));
      }
      out[t][k] = acc;
    }
  }
  return out;
}

/// Per-frame RMS of log1p differences, averaged over frames.
inline double lsd(const perfnet::Matrix<double>& pred, const perfnet::Matrix<double>& target) {
  double total = 0.0;
  for (std::size_t t = 0; t < pred.cols(); ++t) {
    double acc = 0.0;
    for (std::size_t f = 0; f < pred.rows(); ++f) {
      const double d = std::log(1.0 + pred(f, t)) - std::log(1.0 + target(f, t));
      acc += d * d;
    }
    total += std::sqrt(acc / pred.rows());
  }
  return total / pred.cols();
}

/// Central finite differences of `loss` with respect to every entry of every
/// tensor in `params` (restored after each probe).
inline perfnet::nn::ParamSet<double> finite_difference(perfnet::nn::ParamSet<double>& params,
                                                       const std::function<double()>& loss, double h = 1e-5) {
  auto grads = params.zeros_like();
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t].data.size(); ++i) {
      double& w = params[t].data[i];
      const double saved = w;
      w = saved + h;
      const double up = loss();
      w = saved - h;
      const double down = loss();
      w = saved;
      grads[t].data[i] = (up - down) / (2 * h);
    }
  }
  return grads;
}

inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max(std::sqrt(na), std::sqrt(nb));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

// ---------------------------------------------------------------------------
// Hand-assembled Standard MIDI Files
// ---------------------------------------------------------------------------

inline void be(std::vector<std::uint8_t>& out, std::uint32_t v, int n) {
  for (int i = n - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::vector<std::uint8_t> smf(std::uint16_t format, std::uint16_t division,
                                     const std::vector<std::vector<std::uint8_t>>& tracks) {
  std::vector<std::uint8_t> out{'M', 'T', 'h', 'd', 0, 0, 0, 6};
  be(out, format, 2);
  be(out, static_cast<std::uint32_t>(tracks.size()), 2);
  be(out, division, 2);
  for (const auto& t : tracks) {
    out.insert(out.end(), {'M', 'T', 'r', 'k'});
    be(out, static_cast<std::uint32_t>(t.size()), 4);
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

/// Format 0, 480 tpq, no tempo event: note-on 60 at tick 0, note-off at 480
/// (delta 480 = VLQ 0x83 0x60).
inline std::vector<std::uint8_t> one_note_smf() {
  return smf(0, 480, {{0x00, 0x90, 60, 100, 0x83, 0x60, 0x80, 60, 0, 0x00, 0xff, 0x2f, 0x00}});
}

}  // namespace oracle
