#include <gtest/gtest.h>

#include "msps/inn.hpp"
#include "msps/oracles.hpp"

using namespace msps;

TEST(Inn, ConstantFieldClosedForm) {
  SplitMix64 rng(51);
  const InnParams p = InnParams::random(2, rng);
  const std::vector<double> vals{0.5, -1.0, 2.0, 0.25};
  Tensor x({3, 4, 8});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = vals[(i % 8) / 2];
  EXPECT_LE(max_abs_diff(inn_forward(x, p), oracle::inn_constant(3, 4, vals, p)), 1e-12);
}

TEST(Inn, RoundTrips) {
  SplitMix64 rng(52);
  for (int i = 0; i < 100; ++i) {
    const std::size_t k = 1 + rng.next_u64() % 4;
    const InnParams p = InnParams::random(k, rng, 2.0);
    const Tensor x = random_normal({1 + rng.next_u64() % 8, 1 + rng.next_u64() % 8, 4 * k}, rng);
    EXPECT_LE(max_abs_diff(inn_inverse(inn_forward(x, p), p), x), 1e-12);
    EXPECT_LE(max_abs_diff(inn_forward(inn_inverse(x, p), p), x), 1e-12);
  }
}

TEST(Inn, LongerShiftsStayInvertible) {
  SplitMix64 rng(53);
  InnParams p = InnParams::make(3, {1, 2, 3});
  for (auto* ops : {&p.f, &p.g})
    for (auto& op : *ops) op.scale = random_uniform({3}, rng, -1.0, 1.0);
  const Tensor x = random_normal({6, 7, 12}, rng);
  EXPECT_LE(max_abs_diff(inn_inverse(inn_forward(x, p), p), x), 1e-12);
}

TEST(Inn, ShiftOperatorAsDepthwise) {
  SplitMix64 rng(54);
  const Tensor x = random_normal({4, 5, 3}, rng);
  for (Direction d : {Direction::right, Direction::left, Direction::down, Direction::up, Direction::down_right,
                      Direction::up_left, Direction::down_left, Direction::up_right}) {
    const ShiftOperator op{d, 1, random_normal({3}, rng)};
    EXPECT_LE(max_abs_diff(op.apply(x), depthwise_conv3x3(x, op.as_depthwise_kernel())), 1e-15);
  }
  EXPECT_THROW((ShiftOperator{Direction::up, 2, Tensor({3})}.as_depthwise_kernel()), ParameterError);
}

TEST(Inn, SixScalesPerChannel) {
  EXPECT_EQ(InnParams::make(5).parameter_count(), 30u);
}

TEST(Inn, RejectsBadChannels) {
  EXPECT_THROW(inn_forward(Tensor({2, 2, 6}), InnParams::make(1)), DimensionError);
}
