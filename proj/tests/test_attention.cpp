#include <gtest/gtest.h>

#include "epiview/attention.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace epiview;
using namespace epiview::attention;
using numerics::FeatureMap;
using numerics::Rng;

namespace {

Retrieval retrieval(FeatureMap f, std::vector<std::uint8_t> contributed) {
  Retrieval r;
  r.features = std::move(f);
  r.contributed = std::move(contributed);
  return r;
}

}  // namespace

TEST(SelfAttention, SinglePositionAttendsToItself) {
  Rng rng(1);
  const auto p = helpers::random_params(4, 2, rng);
  const auto f = numerics::random_normal(1, 1, 4, rng);
  const auto expected = numerics::apply_linear(p.out_proj, numerics::apply_linear(p.v_proj, f));
  EXPECT_LT(oracle::max_abs_diff(self_attention(f, p), expected), 1e-12);
}

TEST(SelfAttention, ConstantMapGivesConstantOutput) {
  Rng rng(2);
  const auto p = helpers::random_params(4, 1, rng);
  const FeatureMap f(3, 3, 4, 0.3);
  const auto out = self_attention(f, p);
  for (std::size_t q = 1; q < out.pixels(); ++q) {
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(out.pixel(q)[c], out.pixel(std::size_t{0})[c], 1e-12);
  }
}

TEST(SelfAttention, MatchesNaiveOracle) {
  Rng rng(3);
  for (int heads : {1, 2, 4}) {
    const auto p = helpers::random_params(8, heads, rng);
    const auto f = numerics::random_normal(4, 4, 8, rng);
    EXPECT_LT(oracle::max_abs_diff(self_attention(f, p), oracle::cross_attention(f, f, p)), 1e-6);
  }
}

TEST(SelfAttention, ChannelMismatchThrows) {
  Rng rng(4);
  const auto p = helpers::random_params(4, 1, rng);
  EXPECT_THROW(self_attention(FeatureMap(2, 2, 3), p), std::invalid_argument);
}

TEST(DuplicateParams, ValueEqualAndIsolated) {
  Rng rng(5);
  auto src = helpers::random_params(6, 2, rng);
  auto copy = duplicate_params(src);
  EXPECT_EQ(copy.q_proj.weight, src.q_proj.weight);
  EXPECT_EQ(copy.out_proj.bias, src.out_proj.bias);
  EXPECT_EQ(copy.heads, src.heads);
  const double before = src.k_proj.weight[3];
  copy.k_proj.weight[3] += 1.0;
  EXPECT_EQ(src.k_proj.weight[3], before);
  src.v_proj.bias[0] += 1.0;
  EXPECT_NE(copy.v_proj.bias[0], src.v_proj.bias[0]);
}

TEST(FullCrossAttention, SelfReferenceEqualsSelfAttention) {
  Rng rng(6);
  const auto p = helpers::random_params(4, 2, rng);
  const auto f = numerics::random_normal(3, 4, 4, rng);
  const auto r = full_cross_attention(f, make_context(f, p), p);
  EXPECT_LT(oracle::max_abs_diff(r.features, self_attention(f, p)), 1e-6);
}

TEST(FullCrossAttention, MatchesNaiveOracle) {
  Rng rng(7);
  const auto p = helpers::random_params(4, 2, rng);
  const auto t = numerics::random_normal(4, 4, 4, rng);
  const auto ref = numerics::random_normal(4, 4, 4, rng);
  const auto r = full_cross_attention(t, make_context(ref, p), p);
  EXPECT_LT(oracle::max_abs_diff(r.features, oracle::cross_attention(t, ref, p)), 1e-6);
  EXPECT_EQ(r.contributing_pixels(), 16u);
}

TEST(FullCrossAttention, BufferIsQuadraticInPixels) {
  Rng rng(8);
  const auto p = helpers::random_params(4, 1, rng);
  const auto t = numerics::random_normal(5, 3, 4, rng);
  EXPECT_EQ(full_cross_attention(t, make_context(t, p), p).similarity_elems, 15u * 15u);
}

TEST(EpipolarAttention, FullImageSamplingEqualsFullAttention) {
  Rng rng(9);
  const auto src = helpers::random_params(8, 2, rng);
  const auto block = EpipolarAttentionBlock::from_self_attention(src, 0.5);
  const auto t = numerics::random_normal(6, 5, 8, rng);
  const auto ref = numerics::random_normal(6, 5, 8, rng);
  const auto ctx = make_context(ref, src);
  const auto e = epipolar_attention(t, ctx, geometry::full_image_sample_set(5, 6), block);
  const auto f = full_cross_attention(t, ctx, src);
  EXPECT_LT(oracle::max_abs_diff(e.features, f.features), 1e-6);
  EXPECT_LT(oracle::max_abs_diff(e.features, oracle::cross_attention(t, ref, src)), 1e-6);
}

TEST(EpipolarAttention, SingleSampleReturnsItsValue) {
  Rng rng(10);
  const auto p = helpers::random_params(4, 1, rng);
  const auto block = EpipolarAttentionBlock::from_self_attention(p);
  const auto t = numerics::random_normal(2, 2, 4, rng);
  const auto ref = numerics::random_normal(2, 2, 4, rng);
  const auto ctx = make_context(ref, p);
  geometry::EpipolarSampleSet set(2, 2);
  for (int q = 0; q < 4; ++q) {
    const geometry::Sample only{static_cast<double>(q % 2), static_cast<double>(1 - q / 2), true};
    const geometry::Sample masked{0.0, 0.0, false};
    const std::vector<geometry::Sample> s{masked, only};
    set.push_query(s);
  }
  const auto r = epipolar_attention(t, ctx, set, block);
  const auto expected = numerics::apply_linear(p.out_proj, ctx.values);
  for (int q = 0; q < 4; ++q) {
    const std::size_t src = static_cast<std::size_t>((1 - q / 2) * 2 + q % 2);
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(r.features.pixel(static_cast<std::size_t>(q))[c], expected.pixel(src)[c], 1e-12);
  }
}

TEST(EpipolarAttention, AllMaskedQueriesDoNotContribute) {
  Rng rng(11);
  const auto p = helpers::random_params(4, 1, rng);
  const auto t = numerics::random_normal(3, 3, 4, rng);
  const auto set = geometry::build_sample_set(geometry::RelativePose{}, geometry::CameraIntrinsics::from_fov(3, 3));
  const auto r = epipolar_attention(t, make_context(t, p), set, EpipolarAttentionBlock::from_self_attention(p));
  EXPECT_EQ(r.contributing_pixels(), 0u);
  for (double v : r.features.data()) EXPECT_EQ(v, 0.0);
}

TEST(EpipolarAttention, FootprintsMatchSampleSetPath) {
  Rng rng(12);
  const auto p = helpers::random_params(4, 2, rng);
  const auto block = EpipolarAttentionBlock::from_self_attention(p);
  const auto K = geometry::CameraIntrinsics::from_fov(9, 7);
  const auto pose = geometry::relative_pose(geometry::camera_on_sphere({10, 0, 2.5}),
                                            geometry::camera_on_sphere({25, 40, 2.5}));
  const auto set = geometry::build_sample_set(pose, K);
  const auto t = numerics::random_normal(7, 9, 4, rng);
  const auto ctx = make_context(numerics::random_normal(7, 9, 4, rng), p);
  const auto a = epipolar_attention(t, ctx, set, block);
  const auto b = epipolar_attention(t, ctx, prepare_footprints(set, 9, 7), block);
  EXPECT_EQ(oracle::max_abs_diff(a.features, b.features), 0.0);
  EXPECT_EQ(a.contributed, b.contributed);
  EXPECT_EQ(a.similarity_elems, set.total_samples());
  EXPECT_LE(a.similarity_elems, 63u * 9u);
}

TEST(EpipolarAttention, LogitShiftLeavesOutputUnchanged) {
  // Offsetting every key by the same vector c adds q.c to all logits of a
  // query, which the softmax absorbs.
  Rng rng(13);
  const auto p = helpers::random_params(4, 2, rng);
  const auto t = numerics::random_normal(3, 3, 4, rng);
  const auto ref = numerics::random_normal(3, 3, 4, rng);
  const auto set = geometry::full_image_sample_set(3, 3);
  const auto block = EpipolarAttentionBlock::from_self_attention(p);
  const auto base = epipolar_attention(t, make_context(ref, p), set, block);
  auto ctx = make_context(ref, p);
  for (std::size_t q = 0; q < ctx.keys.pixels(); ++q) {
    for (int c = 0; c < 4; ++c) ctx.keys.pixel(q)[c] += 0.37 * (c + 1);
  }
  EXPECT_LT(oracle::max_abs_diff(base.features, epipolar_attention(t, ctx, set, block).features), 1e-9);
}

TEST(Fuse, AlphaEndpointsAndMean) {
  Rng rng(14);
  const auto f_hat = numerics::random_normal(2, 2, 3, rng);
  const auto src = retrieval(numerics::random_normal(2, 2, 3, rng), {1, 0, 1, 1});
  EXPECT_EQ(oracle::max_abs_diff(fuse(f_hat, src, 0.0), f_hat), 0.0);
  const auto one = fuse(f_hat, src, 1.0);
  const auto half = fuse(f_hat, src, 0.5);
  for (std::size_t p = 0; p < 4; ++p) {
    for (int c = 0; c < 3; ++c) {
      const double expect_one = src.contributed[p] ? src.features.pixel(p)[c] : f_hat.pixel(p)[c];
      EXPECT_DOUBLE_EQ(one.pixel(p)[c], expect_one);
      EXPECT_NEAR(half.pixel(p)[c], 0.5 * (expect_one + f_hat.pixel(p)[c]), 1e-15);
    }
  }
  EXPECT_THROW(fuse(f_hat, src, 1.5), std::invalid_argument);
}

TEST(MultiViewAggregate, SingleAndIdenticalViews) {
  Rng rng(15);
  const auto a = retrieval(numerics::random_normal(2, 3, 2, rng), {1, 1, 0, 1, 1, 1});
  const std::vector<Retrieval> one{a};
  EXPECT_EQ(multi_view_aggregate(one).contributed, a.contributed);
  const std::vector<Retrieval> two{a, a};
  const auto agg = multi_view_aggregate(two);
  EXPECT_EQ(agg.contributed, a.contributed);
  for (std::size_t p = 0; p < a.contributed.size(); ++p) {
    for (int c = 0; c < 2; ++c) {
      const double expect = a.contributed[p] ? a.features.pixel(p)[c] : 0.0;
      EXPECT_NEAR(agg.features.pixel(p)[c], expect, 1e-15);
    }
  }
}

TEST(MultiViewAggregate, MaskedViewIsIgnored) {
  FeatureMap fa(1, 2, 1), fb(1, 2, 1), fc(1, 2, 1);
  fa.at(0, 0, 0) = 1.0;
  fa.at(0, 1, 0) = 4.0;
  fb.at(0, 0, 0) = 3.0;
  fb.at(0, 1, 0) = 6.0;
  const std::vector<Retrieval> views{retrieval(fa, {1, 1}), retrieval(fc, {0, 0}), retrieval(fb, {1, 0})};
  const auto agg = multi_view_aggregate(views);
  EXPECT_DOUBLE_EQ(agg.features.at(0, 0, 0), 2.0);
  EXPECT_DOUBLE_EQ(agg.features.at(0, 1, 0), 4.0);
  EXPECT_EQ(agg.contributed, (std::vector<std::uint8_t>{1, 1}));
}

TEST(Probe, IdentityPairFindsItselfExactly) {
  // Identity projections: Q.K peaks on the query's own feature for distinct
  // unit-norm features, so full-image probes land on the query position.
  Rng rng(16);
  const int n = 4;
  AttentionParams p;
  p.heads = 1;
  p.head_dim = 3;
  p.q_proj = numerics::LinearMap::identity(3);
  p.k_proj = numerics::LinearMap::identity(3);
  p.v_proj = numerics::LinearMap::identity(3);
  p.out_proj = numerics::LinearMap::identity(3);
  auto f = numerics::random_normal(n, n, 3, rng);
  for (std::size_t q = 0; q < f.pixels(); ++q) {
    auto v = f.pixel(q);
    const double norm = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    for (auto& x : v) x /= norm;
  }
  const auto ctx = make_context(f, p);
  for (std::size_t q = 0; q < f.pixels(); ++q) {
    const auto probe = probe_full(f, ctx, p, q);
    ASSERT_GE(probe.argmax, 0);
    EXPECT_EQ(static_cast<std::size_t>(probe.argmax), q);
    double sum = 0.0;
    for (double w : probe.weights) sum += w;
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Probe, TiesGoToLowestIndex) {
  AttentionParams p;
  p.heads = 1;
  p.head_dim = 1;
  p.q_proj = numerics::LinearMap::identity(1);
  p.k_proj = numerics::LinearMap::identity(1);
  p.v_proj = numerics::LinearMap::identity(1);
  p.out_proj = numerics::LinearMap::identity(1);
  const FeatureMap f(2, 2, 1, 1.0);
  EXPECT_EQ(probe_full(f, make_context(f, p), p, 3).argmax, 0);
}

TEST(SimilarityImage, MaxNormalised) {
  SimilarityProbe probe;
  probe.positions = {{1.0, 0.0, true}, {0.5, 1.0, true}};
  probe.weights = {0.25, 0.75};
  probe.argmax = 1;
  const auto img = similarity_image(probe, 2, 2);
  double peak = 0.0;
  for (double v : img) peak = std::max(peak, v);
  EXPECT_DOUBLE_EQ(peak, 1.0);
  EXPECT_NEAR(img[1], 0.25 / 0.375, 1e-12);
}
