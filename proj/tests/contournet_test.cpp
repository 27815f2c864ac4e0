#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "perfnet/contournet.hpp"
#include "perfnet/rng.hpp"

using namespace perfnet;

namespace {

ContourConfig tiny_config(std::size_t k = 0) { return {16, 33, {8, 8}, 5, k}; }

template <typename T>
Matrix<T> random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double lo = -1, double hi = 1) {
  Rng rng(seed);
  Matrix<T> m(r, c);
  for (auto& v : m.storage()) v = static_cast<T>(rng.uniform(lo, hi));
  return m;
}

Matrix<float> binary_roll(std::size_t p, std::size_t t, std::uint64_t seed) {
  Rng rng(seed);
  Matrix<float> m(p, t);
  for (auto& v : m.storage()) v = rng.uniform() < 0.2 ? 1.0f : 0.0f;
  return m;
}

}  // namespace

TEST(ContourInit, SameSeedIsBitIdentical) {
  const auto a = contour_init<float>(tiny_config(), 7);
  const auto b = contour_init<float>(tiny_config(), 7);
  EXPECT_TRUE(a.params == b.params);
}

TEST(ContourInit, DifferentSeedsDiffer) {
  const auto a = contour_init<float>(tiny_config(), 7);
  const auto b = contour_init<float>(tiny_config(), 8);
  EXPECT_FALSE(a.params == b.params);
}

TEST(ContourInit, FanInBound) {
  // First layer: 20 input channels x kernel 5 = fan_in 100 -> |w| <= 0.1.
  ContourConfig c{20, 33, {8, 8}, 5, 0};
  const auto w = contour_init<float>(c, 3);
  const auto& enc1 = w.params.find("enc1.weight");
  ASSERT_EQ(enc1.numel(), 8u * 20 * 5);
  float max_abs = 0;
  for (float v : enc1.data) max_abs = std::max(max_abs, std::abs(v));
  EXPECT_LE(max_abs, 0.1f);
  EXPECT_GT(max_abs, 0.09f);  // the bound is actually approached
}

TEST(ContourInit, RejectsEvenKernelAndEmptyWidths) {
  ContourConfig even = tiny_config();
  even.kernel = 4;
  EXPECT_THROW(contour_init<float>(even, 0), InvalidConfig);
  ContourConfig empty = tiny_config();
  empty.encoder_widths.clear();
  EXPECT_THROW(contour_init<float>(empty, 0), InvalidConfig);
}

TEST(ContourForward, DefaultConfigZeroRollShapeAndSign) {
  ContourConfig c;  // 128 pitches, 513 bins, widths 256/384/512/512
  const auto w = contour_init<float>(c, 1);
  Matrix<float> roll(128, 64);
  const auto out = contour_forward(roll, {}, w);
  ASSERT_EQ(out.rows(), 513u);
  ASSERT_EQ(out.cols(), 64u);
  for (float v : out.storage()) {
    ASSERT_TRUE(std::isfinite(v));
    ASSERT_GE(v, 0.0f);
  }
}

TEST(ContourForward, BottleneckShape) {
  ContourConfig c;
  const auto w = contour_init<float>(c, 1);
  ContourTape<float> tape;
  contour_forward(Matrix<float>(128, 64), {}, w, &tape);
  EXPECT_EQ(tape.enc_out.back().rows(), 512u);
  EXPECT_EQ(tape.enc_out.back().cols(), 64u / 16);
}

TEST(ContourForward, PadsAndCropsArbitraryLength) {
  const auto w = contour_init<float>(tiny_config(), 2);
  for (std::size_t t : {1u, 3u, 5u, 17u}) {
    const auto out = contour_forward(binary_roll(16, t, t), {}, w);
    EXPECT_EQ(out.rows(), 33u);
    EXPECT_EQ(out.cols(), t);
  }
}

TEST(ContourForward, Deterministic) {
  const auto w = contour_init<float>(tiny_config(), 5);
  const auto roll = binary_roll(16, 32, 9);
  EXPECT_TRUE(contour_forward(roll, {}, w) == contour_forward(roll, {}, w));
}

TEST(ContourForward, ShapeErrors) {
  const auto w = contour_init<float>(tiny_config(), 5);
  EXPECT_THROW(contour_forward(Matrix<float>(15, 16), {}, w), ShapeMismatch);
  EXPECT_THROW(contour_forward(Matrix<float>(16, 0), {}, w), ShapeMismatch);
  const auto wc = contour_init<float>(tiny_config(2), 5);
  EXPECT_THROW(contour_forward(Matrix<float>(16, 16), {}, wc), MissingCondition);
}

TEST(ContourForward, ConditionSensitivity) {
  const auto w = contour_init<float>(tiny_config(2), 11);
  const auto roll = binary_roll(16, 32, 4);
  const auto a = one_hot<float>(2, 0), b = one_hot<float>(2, 1);
  EXPECT_FALSE(contour_forward(roll, std::span<const float>(a), w) ==
               contour_forward(roll, std::span<const float>(b), w));
}

TEST(ContourGradient, MatchesCentralDifferences) {
  for (std::size_t k : {0u, 2u}) {
    auto w = contour_init<double>(tiny_config(k), 21 + k);
    const auto input = random_matrix<double>(16, 16, 3, 0.0, 1.0);
    const auto target = random_matrix<double>(33, 16, 4, 0.0, 2.0);
    const auto cond = one_hot<double>(k, k > 0 ? 1 : 0);
    auto loss = [&]() {
      const auto out = contour_forward(input, std::span<const double>(cond), w);
      double l = 0;
      for (std::size_t i = 0; i < out.size(); ++i) l += 0.5 * std::pow(out.data()[i] - target.data()[i], 2);
      return l;
    };

    ContourTape<double> tape;
    const auto out = contour_forward(input, std::span<const double>(cond), w, &tape);
    Matrix<double> d_out(33, 16);
    for (std::size_t i = 0; i < out.size(); ++i) d_out.data()[i] = out.data()[i] - target.data()[i];
    auto grads = w.params.zeros_like();
    const auto d_input = contour_backward(tape, d_out, w, grads);

    const auto numeric = oracle::finite_difference(w.params, loss);
    for (std::size_t t = 0; t < grads.size(); ++t)
      EXPECT_LT(oracle::relative_error(grads[t].data, numeric[t].data), 1e-4) << grads[t].name << " K=" << k;

    // Input gradient.
    Matrix<double> probe = input;
    std::vector<double> numeric_in(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) {
      const double saved = probe.data()[i];
      auto eval = [&](double v) {
        probe.data()[i] = v;
        const auto o = contour_forward(probe, std::span<const double>(cond), w);
        double l = 0;
        for (std::size_t j = 0; j < o.size(); ++j) l += 0.5 * std::pow(o.data()[j] - target.data()[j], 2);
        return l;
      };
      numeric_in[i] = (eval(saved + 1e-5) - eval(saved - 1e-5)) / 2e-5;
      probe.data()[i] = saved;
    }
    EXPECT_LT(oracle::relative_error(d_input.storage(), numeric_in), 1e-4);
  }
}
