#include <gtest/gtest.h>

#include "msps/oracles.hpp"
#include "msps/selfcheck.hpp"
#include "msps/wkv.hpp"

using namespace msps;

TEST(Wkv, ReferenceMatchesDoubleLoop) {
  SplitMix64 rng(11);
  for (int i = 0; i < 10; ++i) {
    const Tensor k = random_normal({4, 3}, rng), v = random_normal({4, 3}, rng);
    const WkvParams p = random_wkv_params(3, rng);
    EXPECT_LE(relative_error(bi_wkv_reference(k, v, p), oracle::bi_wkv(k, v, p.w, p.u)), 1e-12);
  }
}

class WkvLinearVsReference : public ::testing::TestWithParam<int> {};

TEST_P(WkvLinearVsReference, Agree) {
  SplitMix64 rng(static_cast<std::uint64_t>(GetParam()));
  const std::size_t t = 1 + rng.next_u64() % 256, c = 1 + rng.next_u64() % 8;
  const Tensor k = random_uniform({t, c}, rng, -20.0, 20.0), v = random_normal({t, c}, rng);
  const WkvParams p = random_wkv_params(c, rng);
  EXPECT_LE(relative_error(bi_wkv_linear(k, v, p), bi_wkv_reference(k, v, p)), 1e-10);
}

INSTANTIATE_TEST_SUITE_P(Seeds, WkvLinearVsReference, ::testing::Range(1, 51));

TEST(Wkv, ExtremeKeysStayFinite) {
  SplitMix64 rng(12);
  Tensor k = random_uniform({64, 2}, rng, -400.0, 400.0);
  const Tensor v = random_normal({64, 2}, rng);
  const WkvParams p = random_wkv_params(2, rng);
  const Tensor out = bi_wkv_linear(k, v, p);
  for (double x : out.storage()) EXPECT_TRUE(std::isfinite(x));
  EXPECT_LE(relative_error(out, bi_wkv_reference(k, v, p)), 1e-10);
}

TEST(Wkv, SingleTokenReturnsValue) {
  const Tensor k = Tensor::matrix({{0.3, -2.0}}), v = Tensor::matrix({{1.5, -0.25}});
  const WkvParams p{Tensor::vector({1.0, 2.0}), Tensor::vector({0.5, -0.5})};
  EXPECT_LE(max_abs_diff(bi_wkv_linear(k, v, p), v), 1e-15);
}

TEST(Wkv, ZeroDecay) {
  SplitMix64 rng(13);
  const Tensor k = random_normal({40, 3}, rng), v = random_normal({40, 3}, rng);
  const WkvParams p{Tensor({3}), random_normal({3}, rng)};
  EXPECT_LE(relative_error(bi_wkv_linear(k, v, p), bi_wkv_reference(k, v, p)), 1e-10);
}

TEST(Wkv, ConvexHull) {
  SplitMix64 rng(14);
  for (int i = 0; i < 20; ++i) {
    const std::size_t t = 2 + rng.next_u64() % 100;
    const Tensor k = random_uniform({t, 4}, rng, -5.0, 5.0), v = random_normal({t, 4}, rng);
    EXPECT_LE(hull_violation(bi_wkv_linear(k, v, random_wkv_params(4, rng)), v), 1e-12);
  }
}

TEST(Wkv, FaultInjectionBreaksHull) {
  SplitMix64 rng(15);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Tensor k = random_uniform({32, 3}, rng, -2.0, 2.0), v = random_normal({32, 3}, rng);
    WkvParams p = random_wkv_params(3, rng);
    p.debug_flip_decay_sign = true;
    worst = std::max(worst, hull_violation(bi_wkv_linear(k, v, p), v));
  }
  EXPECT_GT(worst, 1e-6);
}

TEST(Wkv, ReWkvIsRowThenColumnPass) {
  SplitMix64 rng(16);
  const Tensor k = random_normal({3, 4, 2}, rng), v = random_normal({3, 4, 2}, rng);
  const WkvParams p = random_wkv_params(2, rng);
  const Tensor expect = oracle::two_pass_scan(
      k, v, [&p](const Tensor& ks, const Tensor& vs) { return bi_wkv_reference(ks, vs, p); });
  WkvStats stats;
  EXPECT_LE(relative_error(re_wkv(k, v, p, 2, &stats), expect), 1e-10);
  EXPECT_EQ(stats.kernel_calls, 2u);
}

TEST(Wkv, ShareNeverCallsKernel) {
  WkvCache cache;
  EXPECT_THROW(wkv_share(cache), StateError);
  cache.store(0, {Tensor({3, 2}, 1.0), Tensor({3, 2})});
  wkv_share(cache);
  EXPECT_EQ(cache.stats().kernel_calls, 0u);
  EXPECT_EQ(cache.stats().shares, 1u);
}

TEST(Wkv, MomentBlendAndClamp) {
  const Tensor a({2}, 1.0), b({2}, 3.0);
  EXPECT_LE(max_abs_diff(wkv_moment(a, b, 0.25), Tensor({2}, 2.5)), 1e-15);
  std::vector<std::string> warnings;
  EXPECT_TRUE(wkv_moment(a, b, 1.7, &warnings) == a);
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(Wkv, RejectsBadInputs) {
  const WkvParams p{Tensor({2}), Tensor({2})};
  EXPECT_THROW(bi_wkv_linear(Tensor({0, 2}), Tensor({0, 2}), p), EmptySequenceError);
  EXPECT_THROW(bi_wkv_linear(Tensor({3, 2}), Tensor({3, 3}), p), DimensionError);
  EXPECT_THROW(re_wkv(Tensor({2, 2, 2}), Tensor({2, 2, 2}), p, 0), ParameterError);
}
