#include <gtest/gtest.h>

#include "msps/mixers.hpp"
#include "msps/model.hpp"
#include "msps/oracles.hpp"
#include "msps/selfcheck.hpp"

using namespace msps;

namespace {

SpatialMixerParams single_token_params(std::size_t d, SplitMix64& rng) {
  SpatialMixerParams p = SpatialMixerParams::zeros(d);
  p.w_r = random_normal({d, d}, rng);
  p.w_k = random_normal({d, d}, rng);
  p.w_v = random_normal({d, d}, rng);
  p.w_o = random_normal({d, d}, rng);
  p.value_register = RegisterParams::identity(d);
  p.key_register = RegisterParams::identity(d);
  p.cdc_weights = random_normal({3, 3, d}, rng);
  return p;
}

}  // namespace

TEST(Mixers, SingleTokenClosedForm) {
  SplitMix64 rng(41);
  const SpatialMixerParams p = single_token_params(4, rng);
  const Tensor xm = random_normal({1, 4}, rng), xp = random_normal({1, 4}, rng);
  for (bool semantic : {true, false}) {
    MixerConfig cfg;
    cfg.semantic_scan = semantic;
    EXPECT_LE(max_abs_diff(spatial_mixer(xm, xp, Grid{1, 1}, p, cfg),
                           oracle::single_token_mixer(xm, xp, p.w_r, p.w_v, p.w_o, semantic)),
              1e-12);
  }
}

TEST(Mixers, CdcKillsConstants) {
  SplitMix64 rng(42);
  for (int i = 0; i < 20; ++i) {
    const Tensor img({3 + rng.next_u64() % 4, 3 + rng.next_u64() % 4, 2}, rng.uniform(-50, 50));
    EXPECT_LE(max_abs(cdc(img, random_normal({3, 3, 2}, rng))), 1e-14);
  }
}

TEST(Mixers, CdcRespondsToStepEdge) {
  Tensor img({4, 6, 1});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 3; j < 6; ++j) img.at(i, j, 0) = 1.0;
  const Tensor got = cdc(img, Tensor({3, 3, 1}, 1.0));
  EXPECT_LE(max_abs_diff(got, oracle::cdc_step_response(4, 6, 3, 0.0, 1.0)), 1e-14);
  EXPECT_GT(max_abs(got), 0.0);
}

TEST(Mixers, QShiftIsOneHotDepthwise) {
  SplitMix64 rng(43);
  for (int i = 0; i < 20; ++i) {
    Tensor x({2 + rng.next_u64() % 5, 2 + rng.next_u64() % 5, 8});
    for (double& v : x.storage()) v = static_cast<double>(static_cast<int>(rng.next_u64() % 19) - 9);
    EXPECT_TRUE(q_shift(x) == depthwise_conv3x3(x, oracle::qshift_kernels(8)));
    EXPECT_TRUE(q_shift(x) == depthwise_conv3x3(x, q_shift_kernels(8)));
  }
  EXPECT_THROW(q_shift(Tensor({2, 2, 6})), DimensionError);
}

TEST(Mixers, SharedBlockEvaluatesKernelOnce) {
  ModelConfig mc;
  mc.channels = 8;
  const ModelWeights w = parameter_init(mc, 5);
  SplitMix64 rng(44);
  const Tensor fp = random_normal({4, 4, 8}, rng), fm = random_normal({4, 4, 8}, rng);
  WkvCache cache;
  const MixerConfig cfg = mc.mixer();
  const auto a = mtrwkv_block(fp, fm, w.blocks[0], cfg, &cache, WkvMode::fresh, 0);
  const auto b = mtrwkv_block(a.f_p, a.f_m, w.blocks[1], cfg, &cache, WkvMode::share, 0);
  EXPECT_EQ(cache.stats().fresh_evaluations, 1u);
  EXPECT_EQ(cache.stats().kernel_calls, cfg.iterations);
  EXPECT_EQ(cache.stats().shares, 1u);
  EXPECT_EQ(b.f_m.shape(), fm.shape());
}

TEST(Mixers, ShareWithoutCacheIsAnError) {
  ModelConfig mc;
  mc.channels = 4;
  const ModelWeights w = parameter_init(mc, 5);
  const Tensor f({2, 2, 4}, 0.5);
  EXPECT_THROW(mtrwkv_block(f, f, w.blocks[0], mc.mixer(), nullptr, WkvMode::share), StateError);
}

TEST(Mixers, ZeroChannelMixerKeepsPanStream) {
  SplitMix64 rng(45);
  BlockParams p = BlockParams::zeros(4, 2);
  p.spatial = single_token_params(4, rng);
  p.ln_m_gain = Tensor({4}, 1.0);
  p.ln_p_gain = Tensor({4}, 1.0);
  const Tensor fp = random_normal({3, 3, 4}, rng), fm = random_normal({3, 3, 4}, rng);
  const auto out = mtrwkv_block(fp, fm, p, MixerConfig{});
  EXPECT_TRUE(out.f_p == fp);
  EXPECT_GT(max_abs_diff(out.f_m, fm), 0.0);
}

TEST(Mixers, RasterModeRuns) {
  SplitMix64 rng(46);
  ModelConfig mc;
  mc.channels = 4;
  mc.semantic_scan = false;
  const ModelWeights w = parameter_init(mc, 6);
  const Tensor f = random_normal({3, 5, 4}, rng);
  WkvCache cache;
  mtrwkv_block(f, f, w.blocks[0], mc.mixer(), &cache, WkvMode::fresh, 0);
  EXPECT_EQ(cache.stats().kernel_calls, mc.iterations);  // one row or column pass per iteration
}

TEST(Mixers, BlockFiniteDifferencesAgree) {
  SplitMix64 rng(47);
  ModelConfig mc;
  mc.channels = 8;
  ModelWeights w = parameter_init(mc, 7);
  BlockParams& bp = w.blocks[0];
  bp.spatial.cdc_weights = random_normal({3, 3, 8}, rng, 0.1);
  const Tensor fp = random_normal({4, 4, 8}, rng), fm = random_normal({4, 4, 8}, rng);
  auto loss = [&] {
    const auto out = mtrwkv_block(fp, fm, bp, mc.mixer());
    double s = 0.0;
    for (double x : out.f_m.storage()) s += 0.5 * x * x;
    return s;
  };
  for (Tensor* t : {&bp.spatial.w_o, &bp.spatial.cdc_weights, &bp.channel.w2}) {
    const std::vector<double*> one{&(*t)[rng.next_u64() % t->size()]};
    const double g5 = central_difference(loss, one, {1.0}, 1e-5);
    const double g6 = central_difference(loss, one, {1.0}, 1e-6);
    EXPECT_LE(std::abs(g5 - g6), 1e-3 * std::max({std::abs(g5), std::abs(g6), 1e-6}));
  }
}
