#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "perfnet/dsp/stft.hpp"
#include "perfnet/error.hpp"

namespace perfnet::dsp {

namespace wav_detail {

inline std::uint32_t le32(std::span<const std::uint8_t> b, std::size_t at) {
  return std::uint32_t{b[at]} | (std::uint32_t{b[at + 1]} << 8) | (std::uint32_t{b[at + 2]} << 16) |
         (std::uint32_t{b[at + 3]} << 24);
}
inline std::uint16_t le16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}
inline void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

constexpr std::uint16_t kPcm = 1;
constexpr std::uint16_t kFloat = 3;
constexpr std::uint16_t kExtensible = 0xfffe;

}  // namespace wav_detail

/// RIFF/WAVE reader: PCM16 or IEEE float32, mono or stereo (averaged).
inline AudioBuffer read_wav(std::span<const std::uint8_t> bytes) {
  using namespace wav_detail;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw MalformedRiff("missing RIFF/WAVE header");

  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t codec = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (pos + 8 <= bytes.size()) {
    const auto id = bytes.subspan(pos, 4);
    const std::uint32_t size = le32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    const bool is_data = std::memcmp(id.data(), "data", 4) == 0;
    if (size > bytes.size() - body) {
      // Streaming writers leave 0xFFFFFFFF or stale sizes on the data chunk.
      if (!is_data) throw MalformedRiff("chunk size runs past end of file");
    }
    if (std::memcmp(id.data(), "fmt ", 4) == 0) {
      if (size < 16) throw MalformedRiff("fmt chunk too short");
      codec = le16(bytes, body);
      channels = le16(bytes, body + 2);
      rate = le32(bytes, body + 4);
      bits = le16(bytes, body + 14);
      if (codec == kExtensible) {
        if (size < 26) throw MalformedRiff("extensible fmt chunk too short");
        codec = le16(bytes, body + 24);
      }
      have_fmt = true;
    } else if (is_data) {
      if (!have_fmt) throw MalformedRiff("data chunk before fmt chunk");
      if (channels < 1 || channels > 2)
        throw UnsupportedCodec(std::to_string(channels) + " channels (1 or 2 supported)");
      if (rate == 0) throw MalformedRiff("zero sample rate");
      const bool pcm16 = codec == kPcm && bits == 16;
      const bool f32 = codec == kFloat && bits == 32;
      if (!pcm16 && !f32)
        throw UnsupportedCodec("format " + std::to_string(codec) + " with " + std::to_string(bits) +
                               " bits (PCM16 and float32 supported)");
      const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
      const std::size_t frame_bytes = std::size_t{channels} * bits / 8;
      const std::size_t frames = avail / frame_bytes;
      AudioBuffer out{static_cast<int>(rate), std::vector<double>(frames)};
      for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
          const std::size_t at = body + i * frame_bytes + c * bits / 8;
          if (pcm16) {
            acc += static_cast<std::int16_t>(le16(bytes, at)) / 32768.0;
          } else {
            const std::uint32_t u = le32(bytes, at);
            float f;
            std::memcpy(&f, &u, 4);
            acc += std::isfinite(f) ? f : 0.0f;
          }
        }
        out.samples[i] = acc / channels;
      }
      return out;
    }
    pos = body + size + (size & 1);
  }
  throw MalformedRiff(have_fmt ? "no data chunk" : "no fmt chunk");
}

/// 16-bit PCM mono, canonical 44-byte header. Samples are clipped to [-1, 1].
inline std::vector<std::uint8_t> write_wav(const AudioBuffer& audio) {
  using namespace wav_detail;
  const auto n = static_cast<std::uint32_t>(audio.samples.size());
  const std::uint32_t data_bytes = n * 2;
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(out, 16);
  put16(out, kPcm);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(audio.sample_rate));
  put32(out, static_cast<std::uint32_t>(audio.sample_rate) * 2);
  put16(out, 2);
  put16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put32(out, data_bytes);
  for (double s : audio.samples) {
    const double v = std::isfinite(s) ? std::round(s * 32768.0) : 0.0;
    put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::clamp(v, -32768.0, 32767.0))));
  }
  return out;
}

/// Linear-interpolation resampler. Output length round(len * to / from).
/// No anti-alias filtering.
inline AudioBuffer resample(const AudioBuffer& audio, int to_rate) {
  if (to_rate <= 0) throw InvalidGeometry("target sample rate must be positive");
  if (to_rate == audio.sample_rate) return audio;
  const std::size_t len = audio.samples.size();
  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(len) * to_rate / audio.sample_rate));
  AudioBuffer out{to_rate, std::vector<double>(out_len, 0.0)};
  if (len == 0) return out;
  const double step = static_cast<double>(audio.sample_rate) / to_rate;
  for (std::size_t i = 0; i < out_len; ++i) {
    const double pos = static_cast<double>(i) * step;
    const auto i0 = std::min(static_cast<std::size_t>(pos), len - 1);
    const std::size_t i1 = std::min(i0 + 1, len - 1);
    const double frac = pos - static_cast<double>(i0);
    out.samples[i] = audio.samples[i0] + (audio.samples[i1] - audio.samples[i0]) * std::min(frac, 1.0);
  }
  return out;
}

}  // namespace perfnet::dsp
