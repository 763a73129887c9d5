#include <gtest/gtest.h>

#include "msps/lsh.hpp"
#include "msps/oracles.hpp"
#include "msps/selfcheck.hpp"

using namespace msps;

TEST(Lsh, TranslationByOneCell) {
  const Tensor a = Tensor::vector({0.5, -1.0, 0.25});
  const double r = 2.0, b = 0.75;
  const Tensor v = Tensor::vector({0.3, 0.1, -0.7});
  double aa = 0.0;
  for (double x : a.storage()) aa += x * x;
  Tensor moved = v;
  for (std::size_t j = 0; j < 3; ++j) moved[j] += r * a[j] / aa;
  EXPECT_EQ(e2lsh_hash(moved, a, b, r), e2lsh_hash(v, a, b, r) + 1);
}

TEST(Lsh, NearPairsCollide) {
  LshConfig cfg;
  EXPECT_GE(collision_rate(0.05 * cfg.r, cfg, 8, 1000, 21), 0.9);
}

TEST(Lsh, CollisionRateFallsWithDistance) {
  LshConfig cfg;
  const double p1 = collision_rate(0.1 * cfg.r, cfg, 8, 1000, 22);
  const double p2 = collision_rate(cfg.r, cfg, 8, 1000, 22);
  const double p3 = collision_rate(10.0 * cfg.r, cfg, 8, 1000, 22);
  EXPECT_GE(p1, p2);
  EXPECT_GE(p2, p3);
  EXPECT_GT(p1, p3);
}

TEST(Lsh, SeparatesTwoBlobs) {
  LshConfig cfg;
  SplitMix64 rng(23);
  const Blobs b = two_blobs(32, 4, 100.0 * cfg.r, 1e-3 * cfg.r, rng);
  EXPECT_TRUE(recovers_labels(cluster(b.points, cfg), b.label));
}

TEST(Lsh, AssignmentIsPartition) {
  SplitMix64 rng(24);
  const Tensor v = random_normal({50, 3}, rng, 4.0);
  const ClusterAssignment asg = cluster(v, LshConfig{});
  std::vector<int> seen(50, 0);
  for (std::size_t t : asg.order) ++seen[t];
  for (int s : seen) EXPECT_EQ(s, 1);
  for (std::size_t c = 0; c < asg.count(); ++c)
    for (std::size_t t : asg.groups[c]) EXPECT_EQ(asg.cluster_of[t], c);
}

TEST(Lsh, CapLimitsClusterCount) {
  SplitMix64 rng(25);
  const Tensor v = random_normal({64, 3}, rng, 10.0);
  EXPECT_GT(cluster(v, LshConfig{}).count(), 3u);
  EXPECT_EQ(cluster(v, LshConfig{}, 3).count(), 3u);
}

TEST(Lsh, Deterministic) {
  SplitMix64 rng(26);
  const Tensor v = random_normal({30, 4}, rng, 3.0);
  EXPECT_EQ(cluster(v, LshConfig{}).order, cluster(v, LshConfig{}).order);
}

TEST(Lsh, PrototypesAndWeights) {
  SplitMix64 rng(27);
  const Tensor v = random_normal({40, 5}, rng);
  const ClusterAssignment asg = oracle::random_assignment(40, 6, rng);
  EXPECT_LE(max_abs_diff(prototypes(v, asg), oracle::cluster_means(v, asg)), 1e-12);
  const Tensor w = density_weights(asg);
  double norm = 0.0, s = 0.0;
  for (const auto& g : asg.groups) norm += std::log1p(static_cast<double>(g.size()));
  for (std::size_t c = 0; c < 6; ++c) {
    EXPECT_NEAR(w[c], std::log1p(static_cast<double>(asg.groups[c].size())) / norm, 1e-15);
    EXPECT_GT(w[c], 0.0);
    s += w[c];
  }
  EXPECT_NEAR(s, 1.0, 1e-12);
  const Tensor p = prototypes(v, asg);
  EXPECT_TRUE(weighted_prototypes(p, w) == oracle::scale_rows(p, w));
}

TEST(Lsh, RejectsBadConfig) {
  LshConfig cfg;
  cfg.r = 0.0;
  EXPECT_THROW(cfg.validate(), ParameterError);
  cfg = {};
  cfg.radix = 1;
  EXPECT_THROW(cfg.validate(), ParameterError);
  EXPECT_THROW(cluster(Tensor({0, 3}), LshConfig{}), DimensionError);
}
