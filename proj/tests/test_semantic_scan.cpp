#include <gtest/gtest.h>

#include "msps/oracles.hpp"
#include "msps/semantic_scan.hpp"

using namespace msps;

TEST(SemanticScan, PermutationRoundTripIsBitExact) {
  SplitMix64 rng(31);
  for (int i = 0; i < 100; ++i) {
    const std::size_t t = 1 + rng.next_u64() % 1024;
    const Tensor x = random_normal({t, 2}, rng);
    const auto order = oracle::random_permutation(t, rng);
    EXPECT_TRUE(inverse_reorder(reorder(x, order), order) == x);
  }
}

TEST(SemanticScan, RejectsNonPermutation) {
  const Tensor x({3, 1});
  EXPECT_THROW(reorder(x, {0, 0, 1}), IndexError);
  EXPECT_THROW(reorder(x, {0, 1}), IndexError);
}

TEST(SemanticScan, TokenLayoutAndPrototypeRows) {
  SplitMix64 rng(32);
  const Tensor v = random_normal({16, 4}, rng);
  const ClusterAssignment asg = oracle::random_assignment(16, 3, rng);
  const EnhancedSequence seq = build_tokens(reorder(v, asg.order), asg, RegisterParams::identity(4));
  EXPECT_EQ(seq.tokens.dim(0), 21u);
  EXPECT_EQ(seq.layout.length(), 21u);
  EXPECT_LE(max_abs_diff(slice_rows(seq.tokens, 16, 19), oracle::cluster_means(v, asg)), 1e-12);
  EXPECT_TRUE(slice_rows(seq.tokens, 0, 16) == reorder(v, asg.order));
}

TEST(SemanticScan, ExtendedKeysUseGroupMeans) {
  SplitMix64 rng(33);
  const Tensor k = random_normal({16, 4}, rng);
  const ClusterAssignment asg = oracle::random_assignment(16, 3, rng);
  const RegisterParams rp{random_normal({4, 4}, rng), random_normal({4}, rng)};
  const Tensor ext = extend_keys(reorder(k, asg.order), asg, rp);
  EXPECT_LE(max_abs_diff(slice_rows(ext, 16, 21), oracle::summary_rows(k, asg, rp.weight, rp.bias)), 1e-12);
}

TEST(SemanticScan, BroadcastMatchesPerTokenSum) {
  SplitMix64 rng(34);
  for (int i = 0; i < 20; ++i) {
    const std::size_t t = 2 + rng.next_u64() % 60, c = 1 + rng.next_u64() % std::min<std::size_t>(t, 8);
    const ClusterAssignment asg = oracle::random_assignment(t, c, rng);
    const TokenLayout layout{t, c, asg};
    const Tensor base = random_normal({t, 3}, rng), proto = random_normal({c, 3}, rng), g = random_normal({3}, rng);
    EXPECT_LE(max_abs_diff(broadcast_integrate(base, proto, g, layout), oracle::broadcast(base, proto, g, asg)),
              1e-12);
  }
}

TEST(SemanticScan, SplitOutputsChecksLayout) {
  const ClusterAssignment asg = ClusterAssignment::from_groups({{0, 2}, {1}});
  const TokenLayout layout{3, 2, asg};
  Tensor o({7, 2});
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = static_cast<double>(i);
  const SplitOutputs parts = split_outputs(o, layout);
  EXPECT_EQ(parts.base.dim(0), 3u);
  EXPECT_EQ(parts.proto.dim(0), 2u);
  EXPECT_EQ(parts.global[0], 10.0);
  EXPECT_EQ(parts.reg[1], 13.0);
  EXPECT_THROW(split_outputs(Tensor({6, 2}), layout), LayoutError);
}
