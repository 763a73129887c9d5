#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "msps/fit.hpp"
#include "msps/model.hpp"
#include "msps/oracles.hpp"
#include "msps/run_config.hpp"
#include "msps/selfcheck.hpp"
#include "msps/synth.hpp"
#include "msps/weights_io.hpp"

using namespace msps;

TEST(Model, ScheduleModes) {
  EXPECT_EQ(schedule_mode(0, 2), WkvMode::fresh);
  EXPECT_EQ(schedule_mode(1, 2), WkvMode::share);
  EXPECT_EQ(schedule_mode(2, 2), WkvMode::fresh_with_moment);
  EXPECT_EQ(schedule_mode(3, 2), WkvMode::share);
  EXPECT_THROW(schedule_mode(0, 0), ParameterError);
}

TEST(Model, InstrumentedScheduleCounts) {
  for (std::size_t blocks : {1, 3, 4, 5})
    for (std::size_t gs : {1, 2, 3}) {
      ModelConfig cfg;
      cfg.channels = 4;
      cfg.blocks = blocks;
      cfg.group_size = gs;
      const SyntheticPair pair = synthesize(1, 8, cfg.bands, cfg.scale);
      ForwardTrace tr;
      forward(pair.pan, pair.ms, parameter_init(cfg, 1), cfg, &tr);
      const auto expect = oracle::schedule(blocks, gs);
      EXPECT_EQ(tr.stats.fresh_evaluations, expect.fresh);
      EXPECT_EQ(tr.stats.shares, expect.shares);
      EXPECT_EQ(tr.stats.moment_combines, expect.moments);
    }
  const auto def = oracle::schedule(4, 2);
  EXPECT_EQ(def.fresh, 2u);
  EXPECT_EQ(def.shares, 2u);
  EXPECT_EQ(def.moments, 1u);
}

TEST(Model, ParameterCountFormula) {
  for (std::size_t d : {4, 8, 16})
    for (std::size_t e : {1, 2}) {
      ModelConfig cfg;
      cfg.channels = d;
      cfg.expansion = e;
      EXPECT_EQ(parameter_count(parameter_init(cfg, 1)), oracle::parameter_count(cfg));
    }
}

TEST(Model, ZeroDecoderReturnsUpsampledMs) {
  ModelConfig cfg;
  const SyntheticPair pair = synthesize(cfg.seed, 32, cfg.bands, cfg.scale);
  const Tensor out = forward(pair.pan, pair.ms, parameter_init(cfg, cfg.seed), cfg);
  EXPECT_TRUE(out == bilinear_upsample(pair.ms, cfg.scale));
}

TEST(Model, ForwardDirectionalDerivativesAreStable) {
  ModelConfig cfg;
  const SyntheticPair pair = synthesize(3, 16, cfg.bands, cfg.scale);
  EXPECT_LE(forward_fd_gap(pair, cfg, 5, 1e-4, 1e-5, 11), 1e-2);
}

TEST(Model, RatioMismatchNamesDimensions) {
  ModelConfig cfg;
  const SyntheticPair pair = synthesize(1, 16, cfg.bands, cfg.scale);
  try {
    forward(pair.pan, Tensor({3, 3, 4}), parameter_init(cfg, 1), cfg);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("expected PAN 12x12"), std::string::npos) << msg;
    EXPECT_NE(msg.find("found 16x16"), std::string::npos) << msg;
  }
}

TEST(Model, WeightsRoundTrip) {
  ModelConfig cfg;
  cfg.channels = 8;
  cfg.blocks = 3;
  cfg.alpha = 0.3;
  ModelWeights w = probe_weights(cfg, 4);
  const auto path = std::filesystem::temp_directory_path() / "msps_weights_roundtrip.bin";
  save_weights(path.string(), w, cfg);
  const LoadedModel m = load_weights(path.string());
  std::filesystem::remove(path);
  EXPECT_EQ(m.config.channels, 8u);
  EXPECT_EQ(m.config.blocks, 3u);
  EXPECT_EQ(m.config.alpha, 0.3);
  const SyntheticPair pair = synthesize(2, 16, cfg.bands, cfg.scale);
  EXPECT_TRUE(forward(pair.pan, pair.ms, w, cfg) == forward(pair.pan, pair.ms, m.weights, m.config));
}

TEST(Model, LoadRejectsMissingFile) {
  EXPECT_THROW(load_weights("/nonexistent/msps.bin"), IoError);
}

TEST(Fit, AcceptedOnlyTraceIsMonotone) {
  ModelConfig cfg;
  const SyntheticPair pair = synthesize(1, 16, cfg.bands, cfg.scale);
  FitOptions opt;
  opt.steps = 15;
  opt.accepted_only = true;
  const FitResult r = fit_zeroth_order(pair.pan, pair.ms, pair.gt, parameter_init(cfg, cfg.seed), cfg, opt);
  ASSERT_EQ(r.trace.size(), 16u);
  for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_LE(r.trace[i], r.trace[i - 1]);
  EXPECT_LT(r.trace.back(), r.trace.front());
}

TEST(Fit, SelectsAtMost200DecoderScalars) {
  ModelConfig cfg;
  ModelWeights w = parameter_init(cfg, 1);
  const auto refs = select_fit_parameters(w);
  EXPECT_LE(refs.size(), kMaxFitParameters);
  for (const auto& r : refs) EXPECT_TRUE(r.tensor == &w.dec.w2 || r.tensor == &w.dec.b2);
}

TEST(Fit, RejectsWrongGroundTruth) {
  ModelConfig cfg;
  const SyntheticPair pair = synthesize(1, 16, cfg.bands, cfg.scale);
  EXPECT_THROW(fit_zeroth_order(pair.pan, pair.ms, pair.ms, parameter_init(cfg, 1), cfg, {}), DimensionError);
}

TEST(RunConfig, FlagsOverrideFile) {
  RunConfig rc;
  apply_config_text(rc, "# comment\nchannels = 8\nlsh.r = 0.5  # inline\nsemantic_scan = false\nout = a.msb\n");
  EXPECT_EQ(rc.model.channels, 8u);
  EXPECT_EQ(rc.model.lsh.r, 0.5);
  EXPECT_FALSE(rc.model.semantic_scan);
  apply_setting(rc, "out", "b.msb");
  EXPECT_EQ(rc.out, "b.msb");
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
  RunConfig rc;
  EXPECT_THROW(apply_config_text(rc, "chanels = 8\n"), ParameterError);
  EXPECT_THROW(apply_config_text(rc, "channels = eight\n"), ParameterError);
  EXPECT_THROW(apply_config_text(rc, "channels 8\n"), ParameterError);
  try {
    apply_config_text(rc, "\n\nbogus = 1\n", "run.cfg");
  } catch (const ParameterError& e) {
    EXPECT_NE(std::string(e.what()).find("run.cfg:3"), std::string::npos);
  }
  EXPECT_THROW(resolve_config("", {{"channels", "6"}}), ParameterError);
}
