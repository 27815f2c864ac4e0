#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "perfnet/checkpoint.hpp"
#include "perfnet/trainer.hpp"
#include "tiny.hpp"

using namespace perfnet;

namespace {

Checkpoint trained_checkpoint() {
  auto ds = tiny::random_dataset({20, 40}, 3);
  auto c = initial_checkpoint(tiny::config(), ds.labels, 11);
  TrainConfig cfg;
  cfg.steps = 3;
  cfg.batch_size = 2;
  cfg.segment_frames = 16;
  cfg.seed = 11;
  train_loop(ds, c, cfg);
  return c;
}

void expect_bit_equal(const nn::ParamSet<float>& a, const nn::ParamSet<float>& b) {
  ASSERT_TRUE(a.same_layout(b));
  for (std::size_t t = 0; t < a.size(); ++t)
    ASSERT_EQ(0, std::memcmp(a[t].data.data(), b[t].data.data(), a[t].data.size() * sizeof(float))) << a[t].name;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  auto c = trained_checkpoint();
  c.model.contour.params[0].data[0] = -0.0f;
  c.model.contour.params[0].data[1] = std::numeric_limits<float>::denorm_min();
  const auto back = deserialize_checkpoint(serialize_checkpoint(c));
  EXPECT_EQ(back.model.config, c.model.config);
  EXPECT_EQ(back.model.labels, c.model.labels);
  EXPECT_EQ(back.step, 3u);
  EXPECT_EQ(back.seed, 11u);
  expect_bit_equal(back.model.contour.params, c.model.contour.params);
  expect_bit_equal(back.model.texture.params, c.model.texture.params);
  ASSERT_TRUE(back.optimizer.has_value());
  EXPECT_EQ(*back.optimizer, *c.optimizer);
  EXPECT_EQ(serialize_checkpoint(back), serialize_checkpoint(c));
}

TEST(Checkpoint, WithoutOptimizerState) {
  Checkpoint c;
  c.model = model_init<float>(tiny::config(), {"only"}, 5);
  const auto back = deserialize_checkpoint(serialize_checkpoint(c));
  EXPECT_FALSE(back.optimizer.has_value());
  EXPECT_EQ(back.model.contour.params, c.model.contour.params);
}

TEST(Checkpoint, LayoutOnDisk) {
  const auto c = trained_checkpoint();
  const auto bytes = serialize_checkpoint(c);
  ASSERT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "PNET");
  EXPECT_EQ(bytes[4], checkpoint_version);
  const std::uint32_t meta_len = bytes[8] | bytes[9] << 8 | bytes[10] << 16 | bytes[11] << 24;
  const auto meta = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + meta_len);
  EXPECT_EQ(meta["labels"], (nlohmann::json{"a", "b"}));
  EXPECT_EQ(meta["model"]["n_fft"], 64);
  std::size_t floats = 0;
  for (const auto& t : meta["tensors"]) {
    std::size_t n = 1;
    for (auto d : t["shape"]) n *= d.get<std::size_t>();
    floats += n;
  }
  EXPECT_EQ(bytes.size(), 12 + meta_len + 4 * floats + 4);
  EXPECT_EQ(meta["tensors"][0]["name"], "contour.enc1.weight");
  float first;
  std::memcpy(&first, bytes.data() + 12 + meta_len, 4);
  EXPECT_EQ(first, c.model.contour.params[0].data[0]);
}

TEST(Checkpoint, FlippedPayloadByteIsCorrupt) {
  const auto bytes = serialize_checkpoint(trained_checkpoint());
  for (std::size_t at : {std::size_t{20}, bytes.size() / 2, bytes.size() - 5, bytes.size() - 1}) {
    auto bad = bytes;
    bad[at] ^= 0x10;
    EXPECT_THROW(deserialize_checkpoint(bad), CorruptFile) << at;
  }
}

TEST(Checkpoint, NewerVersionIsRejected) {
  auto bytes = serialize_checkpoint(trained_checkpoint());
  bytes[4] += 1;
  EXPECT_THROW(deserialize_checkpoint(bytes), VersionMismatch);
}

TEST(Checkpoint, TruncatedOrForeignFiles) {
  auto bytes = serialize_checkpoint(trained_checkpoint());
  EXPECT_THROW(deserialize_checkpoint(std::span(bytes).first(10)), CorruptFile);
  EXPECT_THROW(deserialize_checkpoint(std::span(bytes).first(bytes.size() - 8)), CorruptFile);
  bytes[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bytes), CorruptFile);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "perfnet_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto c = trained_checkpoint();
  save_checkpoint(c, dir / "m.pnet");
  const auto back = load_checkpoint(dir / "m.pnet");
  EXPECT_EQ(serialize_checkpoint(back), serialize_checkpoint(c));
  EXPECT_THROW(load_checkpoint(dir / "missing.pnet"), IoError);
  std::filesystem::remove_all(dir);
}
