#pragma once

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "perfnet/error.hpp"
#include "perfnet/io.hpp"
#include "perfnet/model.hpp"
#include "perfnet/nn/adam.hpp"

namespace perfnet {

inline constexpr std::uint32_t checkpoint_version = 1;

template <typename T>
struct OptimizerState {
  nn::AdamState<T> contour;
  nn::AdamState<T> texture;
  bool operator==(const OptimizerState&) const = default;
};

/// Model weights plus the training position they were saved at.
struct Checkpoint {
  Model<float> model;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  std::optional<OptimizerState<float>> optimizer;
};

namespace checkpoint_detail {

inline nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"sample_rate", c.sample_rate},
          {"n_fft", c.geometry.n_fft},
          {"hop", c.geometry.hop},
          {"pitch_min", c.pitch_min},
          {"pitch_max", c.pitch_max},
          {"encoder_widths", c.encoder_widths},
          {"kernel", c.kernel},
          {"texture",
           {{"num_bands", c.texture.num_bands},
            {"blocks_per_band", c.texture.blocks_per_band},
            {"hidden_channels", c.texture.hidden_channels},
            {"bias", c.texture.bias}}}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.sample_rate = j.at("sample_rate").get<int>();
  c.geometry.n_fft = j.at("n_fft").get<std::size_t>();
  c.geometry.hop = j.at("hop").get<std::size_t>();
  c.pitch_min = j.at("pitch_min").get<int>();
  c.pitch_max = j.at("pitch_max").get<int>();
  c.encoder_widths = j.at("encoder_widths").get<std::vector<std::size_t>>();
  c.kernel = j.at("kernel").get<std::size_t>();
  const auto& t = j.at("texture");
  c.texture.num_bands = t.at("num_bands").get<std::size_t>();
  c.texture.blocks_per_band = t.at("blocks_per_band").get<std::size_t>();
  c.texture.hidden_channels = t.at("hidden_channels").get<std::size_t>();
  c.texture.bias = t.at("bias").get<bool>();
  return c;
}

struct NamedSet {
  std::string prefix;
  nn::ParamSet<float>* set;
};

inline std::vector<NamedSet> tensor_sets(Checkpoint& c) {
  std::vector<NamedSet> sets{{"contour.", &c.model.contour.params}, {"texture.", &c.model.texture.params}};
  if (c.optimizer) {
    sets.push_back({"adam.m.contour.", &c.optimizer->contour.m});
    sets.push_back({"adam.v.contour.", &c.optimizer->contour.v});
    sets.push_back({"adam.m.texture.", &c.optimizer->texture.m});
    sets.push_back({"adam.v.texture.", &c.optimizer->texture.v});
  }
  return sets;
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return std::uint32_t{b[at]} | std::uint32_t{b[at + 1]} << 8 | std::uint32_t{b[at + 2]} << 16 |
         std::uint32_t{b[at + 3]} << 24;
}

inline std::uint32_t crc32_of(std::span<const std::uint8_t> b) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < b.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(b.size() - done, 1u << 30));
    crc = crc32(crc, b.data() + done, chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace checkpoint_detail

/// "PNET" | u32 version | u32 metadata length | JSON metadata | f32 tensors |
/// u32 CRC32 of everything before it. All integers and floats little-endian.
inline std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint) {
  using namespace checkpoint_detail;
  Checkpoint c = checkpoint;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& s : tensor_sets(c))
    for (const auto& t : *s.set) tensors.push_back({{"name", s.prefix + t.name}, {"shape", t.shape}});
  nlohmann::json meta{{"format", "perfnet-checkpoint"},
                      {"version", checkpoint_version},
                      {"model", config_to_json(c.model.config)},
                      {"labels", c.model.labels},
                      {"step", c.step},
                      {"seed", c.seed},
                      {"optimizer", c.optimizer ? nlohmann::json{{"step", c.optimizer->contour.step}}
                                                : nlohmann::json(nullptr)},
                      {"tensors", std::move(tensors)}};
  const std::string text = meta.dump();

  std::vector<std::uint8_t> out{'P', 'N', 'E', 'T'};
  put_u32(out, checkpoint_version);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& s : tensor_sets(c))
    for (const auto& t : *s.set)
      for (float v : t.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
  put_u32(out, crc32_of(out));
  return out;
}

inline Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  using namespace checkpoint_detail;
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "PNET", 4) != 0) throw CorruptFile("missing PNET magic");
  const auto version = get_u32(bytes, 4);
  if (version != checkpoint_version)
    throw VersionMismatch("file version " + std::to_string(version) + ", supported " +
                          std::to_string(checkpoint_version));
  const auto body = bytes.first(bytes.size() - 4);
  if (crc32_of(body) != get_u32(bytes, bytes.size() - 4)) throw CorruptFile("checksum mismatch");
  const std::size_t meta_len = get_u32(bytes, 8);
  if (12 + meta_len > body.size()) throw CorruptFile("metadata length exceeds file");

  Checkpoint c;
  std::vector<std::pair<std::string, std::vector<std::size_t>>> listed;
  try {
    const auto meta = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + static_cast<long>(meta_len));
    const auto config = config_from_json(meta.at("model"));
    c.model = model_init<float>(config, meta.at("labels").get<std::vector<std::string>>(), 0);
    c.step = meta.at("step").get<std::uint64_t>();
    c.seed = meta.at("seed").get<std::uint64_t>();
    if (!meta.at("optimizer").is_null()) {
      const auto step = meta["optimizer"].at("step").get<std::uint64_t>();
      c.optimizer = OptimizerState<float>{nn::adam_init(c.model.contour.params), nn::adam_init(c.model.texture.params)};
      c.optimizer->contour.step = c.optimizer->texture.step = step;
    }
    for (const auto& t : meta.at("tensors"))
      listed.emplace_back(t.at("name").get<std::string>(), t.at("shape").get<std::vector<std::size_t>>());
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFile(std::string("bad metadata: ") + e.what());
  } catch (const Error& e) {
    throw CorruptFile("bad metadata: " + std::string(e.what()));
  }

  std::size_t at = 12 + meta_len, k = 0;
  for (const auto& s : tensor_sets(c)) {
    for (auto& t : *s.set) {
      if (k >= listed.size() || listed[k].first != s.prefix + t.name || listed[k].second != t.shape)
        throw CorruptFile("tensor list does not match the stored configuration");
      ++k;
      if (at + 4 * t.data.size() > body.size()) throw CorruptFile("tensor data truncated");
      for (auto& v : t.data) {
        v = std::bit_cast<float>(get_u32(bytes, at));
        at += 4;
      }
    }
  }
  if (k != listed.size() || at != body.size()) throw CorruptFile("unexpected trailing tensor data");
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(c));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path));
}

}  // namespace perfnet
