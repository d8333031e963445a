#include <gtest/gtest.h>

#include <cmath>

#include "epiview/numerics.hpp"
#include "oracles.hpp"

using namespace epiview::numerics;

TEST(FeatureMap, LayoutIsRowMajorChannelsInnermost) {
  FeatureMap f(2, 3, 4);
  f.at(1, 2, 3) = 7.0;
  EXPECT_EQ(f.data()[(1 * 3 + 2) * 4 + 3], 7.0);
  EXPECT_EQ(f.pixel(1, 2)[3], 7.0);
  EXPECT_EQ(f.pixel(std::size_t{5})[3], 7.0);
  EXPECT_EQ(f.pixels(), 6u);
  EXPECT_TRUE(f.all_finite());
  f.at(0, 0, 0) = std::nan("");
  EXPECT_FALSE(f.all_finite());
}

TEST(BilinearSample, ExactAtLatticePoints) {
  Rng rng(1);
  const auto f = random_normal(5, 6, 3, rng);
  const auto v = bilinear_sample(f, 2.0, 3.0);
  ASSERT_TRUE(v);
  for (int c = 0; c < 3; ++c) EXPECT_EQ((*v)[c], f.at(3, 2, c));
}

TEST(BilinearSample, MidpointBlend) {
  FeatureMap f(1, 2, 1);
  f.at(0, 1, 0) = 1.0;
  EXPECT_DOUBLE_EQ((*bilinear_sample(f, 0.5, 0.0))[0], 0.5);
}

TEST(BilinearSample, OutOfGridIsInvalid) {
  FeatureMap f(4, 4, 1, 1.0);
  EXPECT_FALSE(bilinear_sample(f, -0.5, 0.0));
  EXPECT_FALSE(bilinear_sample(f, 0.0, 3.01));
  EXPECT_TRUE(bilinear_sample(f, 3.0, 3.0));
}

TEST(BilinearSample, LinearAlongAxes) {
  Rng rng(2);
  const auto f = random_normal(4, 4, 2, rng);
  for (double s : {0.1, 0.3, 0.77}) {
    const auto v = *bilinear_sample(f, 1.0 + s, 2.0);
    for (int c = 0; c < 2; ++c) EXPECT_NEAR(v[c], (1 - s) * f.at(2, 1, c) + s * f.at(2, 2, c), 1e-14);
    const auto w = *bilinear_sample(f, 3.0, 0.0 + s);
    for (int c = 0; c < 2; ++c) EXPECT_NEAR(w[c], (1 - s) * f.at(0, 3, c) + s * f.at(1, 3, c), 1e-14);
  }
}

TEST(MaskedSoftmax, SingleValidEntry) {
  const std::vector<Scalar> logits{3.0, -1.0, 5.0};
  const std::vector<std::uint8_t> mask{0, 1, 0};
  const auto r = masked_softmax(logits, mask, 1.0);
  EXPECT_FALSE(r.empty);
  EXPECT_EQ(r.weights, (std::vector<Scalar>{0.0, 1.0, 0.0}));
}

TEST(MaskedSoftmax, EqualLogits) {
  const std::vector<Scalar> logits(4, 2.5);
  const std::vector<std::uint8_t> mask{1, 1, 0, 1};
  const auto r = masked_softmax(logits, mask, 0.7);
  EXPECT_NEAR(r.weights[0], 1.0 / 3, 1e-15);
  EXPECT_EQ(r.weights[2], 0.0);
}

TEST(MaskedSoftmax, AllMasked) {
  const std::vector<Scalar> logits{1.0, 2.0};
  const std::vector<std::uint8_t> mask{0, 0};
  const auto r = masked_softmax(logits, mask, 1.0);
  EXPECT_TRUE(r.empty);
  for (double w : r.weights) EXPECT_EQ(w, 0.0);
}

TEST(MaskedSoftmax, MatchesDirectOracle) {
  Rng rng(3);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Scalar> logits(17);
    std::vector<std::uint8_t> mask(17);
    for (std::size_t i = 0; i < logits.size(); ++i) {
      logits[i] = n(rng);
      mask[i] = (i * 7 + trial) % 3 != 0;
    }
    const double scale = 0.4;
    std::vector<double> valid;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      if (mask[i]) valid.push_back(scale * logits[i]);
    }
    const auto expected = oracle::softmax(valid);
    const auto r = masked_softmax(logits, mask, scale);
    std::size_t k = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      if (mask[i]) EXPECT_NEAR(r.weights[i], expected[k++], 1e-12);
      else EXPECT_EQ(r.weights[i], 0.0);
    }
  }
}

TEST(MaskedSoftmax, ShiftInvariant) {
  Rng rng(4);
  std::normal_distribution<double> n;
  std::vector<Scalar> logits(9), shifted(9);
  const std::vector<std::uint8_t> mask{1, 0, 1, 1, 1, 0, 1, 1, 1};
  for (std::size_t i = 0; i < 9; ++i) {
    logits[i] = n(rng);
    shifted[i] = logits[i] + 123.0;
  }
  const auto a = masked_softmax(logits, mask, 1.0);
  const auto b = masked_softmax(shifted, mask, 1.0);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(a.weights[i], b.weights[i], 1e-12);
}

TEST(MaskedSoftmax, LargeLogitsStayFinite) {
  const std::vector<Scalar> logits{1000.0, 999.0};
  const std::vector<std::uint8_t> mask{1, 1};
  const auto r = masked_softmax(logits, mask, 1.0);
  EXPECT_TRUE(std::isfinite(r.weights[0]));
  EXPECT_NEAR(r.weights[0] + r.weights[1], 1.0, 1e-15);
}

TEST(ApplyLinear, IdentityAndConstant) {
  Rng rng(5);
  const auto f = random_normal(3, 3, 4, rng);
  EXPECT_EQ(oracle::max_abs_diff(apply_linear(LinearMap::identity(4), f), f), 0.0);
  auto m = LinearMap::zeros(4, 2);
  m.bias = {1.5, -2.0};
  const auto g = apply_linear(m, f);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 3; ++x) {
      EXPECT_EQ(g.at(y, x, 0), 1.5);
      EXPECT_EQ(g.at(y, x, 1), -2.0);
    }
  }
}

TEST(ApplyLinear, MatchesPerPixelOracle) {
  Rng rng(6);
  const auto f = random_normal(4, 5, 3, rng);
  const auto m = random_linear(3, 6, rng);
  const auto g = apply_linear(m, f);
  for (int p = 0; p < 20; ++p) {
    const auto expected = oracle::affine(m, oracle::pixel(f, p));
    for (int c = 0; c < 6; ++c) EXPECT_NEAR(g.pixel(static_cast<std::size_t>(p))[c], expected[c], 1e-12);
  }
}

TEST(ApplyLinear, AdditiveUpToBias) {
  Rng rng(7);
  const auto a = random_normal(3, 4, 3, rng);
  const auto b = random_normal(3, 4, 3, rng);
  const auto m = random_linear(3, 5, rng);
  FeatureMap sum(3, 4, 3);
  for (std::size_t i = 0; i < sum.data().size(); ++i) sum.data()[i] = a.data()[i] + b.data()[i];
  const auto fs = apply_linear(m, sum);
  const auto fa = apply_linear(m, a);
  const auto fb = apply_linear(m, b);
  for (std::size_t p = 0; p < 12; ++p) {
    for (int c = 0; c < 5; ++c) EXPECT_NEAR(fs.pixel(p)[c], fa.pixel(p)[c] + fb.pixel(p)[c] - m.bias[c], 1e-9);
  }
}

TEST(ApplyLinear, DimensionMismatchThrows) {
  FeatureMap f(2, 2, 3);
  EXPECT_THROW(apply_linear(LinearMap::identity(4), f), std::invalid_argument);
}

TEST(Rng, SeededStreamsRepeat) {
  Rng a(42), b(42);
  EXPECT_EQ(oracle::max_abs_diff(random_normal(3, 3, 2, a), random_normal(3, 3, 2, b)), 0.0);
}
