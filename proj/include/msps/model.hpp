#pragma once

// End-to-end fusion network:
//
//   F_P = E_P(I_P),  F_M = E_M(Up(I_M))
//   (F_P, F_M) <- block_i(F_P, F_M),  i = 1..L
//   I_F = Dec(F_M) + Up(I_M)
//
// Each encoder is conv-lift -> half instance norm -> invertible Q-shift.
// The decoder is conv -> SiLU -> conv with a zero-initialized last layer.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "msps/errors.hpp"
#include "msps/inn.hpp"
#include "msps/mixers.hpp"
#include "msps/random.hpp"
#include "msps/tensor.hpp"
#include "msps/wkv.hpp"

namespace msps {

struct ModelConfig {
  std::size_t channels = 16;      // D
  std::size_t blocks = 4;         // L
  std::size_t group_size = 2;     // layers per WKV group
  std::size_t max_clusters = 8;   // C_max
  std::size_t iterations = 2;     // m
  double alpha = 0.5;             // initial momentum
  LshConfig lsh;
  std::size_t scale = 4;          // MS -> PAN resolution ratio
  std::size_t expansion = 2;      // channel mixer hidden ratio e
  std::size_t bands = 4;          // MS bands B
  std::uint64_t seed = 42;
  bool semantic_scan = true;
  bool weight_prototypes = false;

  void validate() const {
    if (channels == 0 || channels % 4 != 0)
      throw ParameterError("config: channels D must be a positive multiple of 4");
    if (blocks == 0) throw ParameterError("config: blocks L must be >= 1");
    if (group_size == 0) throw ParameterError("config: group_size must be >= 1");
    if (iterations == 0) throw ParameterError("config: iterations m must be >= 1");
    if (scale == 0) throw ParameterError("config: scale must be >= 1");
    if (expansion == 0) throw ParameterError("config: expansion must be >= 1");
    if (bands == 0) throw ParameterError("config: bands must be >= 1");
    lsh.validate();
  }

  MixerConfig mixer() const {
    MixerConfig m;
    m.iterations = iterations;
    m.lsh = lsh;
    m.max_clusters = max_clusters;
    m.semantic_scan = semantic_scan;
    m.weight_prototypes = weight_prototypes;
    return m;
  }
};

struct EncoderParams {
  Tensor lift_w;  // [3, 3, Cin, D]
  Tensor lift_b;  // [D]
  Tensor hin_gain, hin_bias;  // [D/2]
  InnParams inn;
};

struct DecoderParams {
  Tensor w1, b1;  // [3, 3, D, D], [D]
  Tensor w2, b2;  // [3, 3, D, B], [B]
};

struct ModelWeights {
  EncoderParams enc_p;
  EncoderParams enc_m;
  std::vector<BlockParams> blocks;
  DecoderParams dec;
  Tensor momentum;  // [1]
};

// Calls f(name, tensor) for every learnable tensor in a fixed order.
template <typename Weights, typename F>
void visit_parameters(Weights& w, F&& f) {
  auto encoder = [&f](const std::string& pre, auto& e) {
    f(pre + ".lift_w", e.lift_w);
    f(pre + ".lift_b", e.lift_b);
    f(pre + ".hin_gain", e.hin_gain);
    f(pre + ".hin_bias", e.hin_bias);
    for (std::size_t s = 0; s < 3; ++s) f(pre + ".inn.f" + std::to_string(s + 1), e.inn.f[s].scale);
    for (std::size_t s = 0; s < 3; ++s) f(pre + ".inn.g" + std::to_string(s + 1), e.inn.g[s].scale);
  };
  encoder("enc_p", w.enc_p);
  encoder("enc_m", w.enc_m);
  for (std::size_t i = 0; i < w.blocks.size(); ++i) {
    auto& b = w.blocks[i];
    const std::string pre = "blocks." + std::to_string(i);
    f(pre + ".ln_m_gain", b.ln_m_gain);
    f(pre + ".ln_m_bias", b.ln_m_bias);
    f(pre + ".ln_p_gain", b.ln_p_gain);
    f(pre + ".ln_p_bias", b.ln_p_bias);
    f(pre + ".spatial.w_r", b.spatial.w_r);
    f(pre + ".spatial.w_k", b.spatial.w_k);
    f(pre + ".spatial.w_v", b.spatial.w_v);
    f(pre + ".spatial.w_o", b.spatial.w_o);
    f(pre + ".spatial.raw_decay", b.spatial.raw_decay);
    f(pre + ".spatial.bonus", b.spatial.bonus);
    f(pre + ".spatial.value_register.weight", b.spatial.value_register.weight);
    f(pre + ".spatial.value_register.bias", b.spatial.value_register.bias);
    f(pre + ".spatial.key_register.weight", b.spatial.key_register.weight);
    f(pre + ".spatial.key_register.bias", b.spatial.key_register.bias);
    f(pre + ".spatial.cdc_weights", b.spatial.cdc_weights);
    f(pre + ".channel.ln_gain", b.channel.ln_gain);
    f(pre + ".channel.ln_bias", b.channel.ln_bias);
    f(pre + ".channel.w1", b.channel.w1);
    f(pre + ".channel.w2", b.channel.w2);
    f(pre + ".channel.w3", b.channel.w3);
  }
  f(std::string("dec.w1"), w.dec.w1);
  f(std::string("dec.b1"), w.dec.b1);
  f(std::string("dec.w2"), w.dec.w2);
  f(std::string("dec.b2"), w.dec.b2);
  f(std::string("momentum"), w.momentum);
}

inline std::size_t parameter_count(const ModelWeights& w) {
  std::size_t n = 0;
  visit_parameters(w, [&n](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

namespace detail {

inline Tensor fan_in_uniform(Shape shape, std::size_t fan_in, SplitMix64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return random_uniform(std::move(shape), rng, -bound, bound);
}

inline EncoderParams init_encoder(std::size_t cin, std::size_t d, SplitMix64& rng) {
  EncoderParams e;
  e.lift_w = fan_in_uniform({3, 3, cin, d}, 9 * cin, rng);
  e.lift_b = fan_in_uniform({d}, 9 * cin, rng);
  e.hin_gain = Tensor({d / 2}, 1.0);
  e.hin_bias = Tensor({d / 2}, 0.0);
  e.inn = InnParams::random(d / 4, rng);
  return e;
}

}  // namespace detail

// Projections ~ U(+-1/sqrt(fan_in)); decay raw 0 (w = 1), bonus 0; CDC
// weights and the last decoder layer start at zero; norms start at identity.
inline ModelWeights parameter_init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t d = cfg.channels, e = cfg.expansion, nb = cfg.bands;
  SplitMix64 rng(seed);
  ModelWeights w;
  w.enc_p = detail::init_encoder(1, d, rng);
  w.enc_m = detail::init_encoder(nb, d, rng);
  for (std::size_t i = 0; i < cfg.blocks; ++i) {
    BlockParams b = BlockParams::zeros(d, e);
    b.ln_m_gain = Tensor({d}, 1.0);
    b.ln_p_gain = Tensor({d}, 1.0);
    b.spatial.w_r = detail::fan_in_uniform({d, d}, d, rng);
    b.spatial.w_k = detail::fan_in_uniform({d, d}, d, rng);
    b.spatial.w_v = detail::fan_in_uniform({d, d}, d, rng);
    b.spatial.w_o = detail::fan_in_uniform({d, d}, d, rng);
    b.spatial.value_register.weight = detail::fan_in_uniform({d, d}, d, rng);
    b.spatial.key_register.weight = detail::fan_in_uniform({d, d}, d, rng);
    b.channel.ln_gain = Tensor({2 * d}, 1.0);
    b.channel.w1 = detail::fan_in_uniform({2 * d, e * d}, 2 * d, rng);
    b.channel.w2 = detail::fan_in_uniform({2 * d, e * d}, 2 * d, rng);
    b.channel.w3 = detail::fan_in_uniform({e * d, d}, e * d, rng);
    w.blocks.push_back(std::move(b));
  }
  w.dec.w1 = detail::fan_in_uniform({3, 3, d, d}, 9 * d, rng);
  w.dec.b1 = Tensor({d});
  w.dec.w2 = Tensor({3, 3, d, nb});
  w.dec.b2 = Tensor({nb});
  w.momentum = Tensor({1}, cfg.alpha);
  return w;
}

// ---------------------------------------------------------------------------

inline Tensor run_encoder(const Tensor& x, const EncoderParams& e) {
  const Tensor lifted = conv3x3(x, e.lift_w, e.lift_b);
  return inn_forward(half_instance_norm(lifted, e.hin_gain, e.hin_bias), e.inn);
}

inline Tensor run_decoder(const Tensor& f, const DecoderParams& d) {
  return conv3x3(silu(conv3x3(f, d.w1, d.b1)), d.w2, d.b2);
}

inline void check_input_pair(const Tensor& pan, const Tensor& ms, const ModelConfig& cfg) {
  if (pan.rank() != 3 || pan.dim(2) != 1)
    throw DimensionError("PAN must be H x W x 1, found " + shape_str(pan.shape()));
  if (ms.rank() != 3 || ms.dim(2) != cfg.bands)
    throw DimensionError("MS must be h x w x " + std::to_string(cfg.bands) + ", found " +
                         shape_str(ms.shape()));
  if (pan.dim(0) != ms.dim(0) * cfg.scale || pan.dim(1) != ms.dim(1) * cfg.scale)
    throw DimensionError("PAN/MS ratio mismatch: expected PAN " +
                         std::to_string(ms.dim(0) * cfg.scale) + "x" +
                         std::to_string(ms.dim(1) * cfg.scale) + " for MS " +
                         std::to_string(ms.dim(0)) + "x" + std::to_string(ms.dim(1)) +
                         " at scale " + std::to_string(cfg.scale) + ", found " +
                         std::to_string(pan.dim(0)) + "x" + std::to_string(pan.dim(1)));
}

struct Features {
  Tensor f_p;
  Tensor f_m;
};

inline Features encode(const Tensor& pan, const Tensor& ms, const ModelWeights& w,
                       const ModelConfig& cfg) {
  check_input_pair(pan, ms, cfg);
  return {run_encoder(pan, w.enc_p), run_encoder(bilinear_upsample(ms, cfg.scale), w.enc_m)};
}

struct ForwardTrace {
  WkvStats stats;
  std::vector<SpatialMixerTrace> blocks;
  std::vector<std::string> warnings;
};

// Runs the block stack with the sharing/momentum schedule; returns the final
// features.
inline Features run_blocks(Features f, const ModelWeights& w, const ModelConfig& cfg,
                           ForwardTrace* trace = nullptr, const MixerConfig* mixer = nullptr) {
  const MixerConfig mc = mixer ? *mixer : cfg.mixer();
  WkvCache cache(w.momentum[0]);
  for (std::size_t i = 0; i < w.blocks.size(); ++i) {
    SpatialMixerTrace st;
    auto out = mtrwkv_block(f.f_p, f.f_m, w.blocks[i], mc, &cache,
                            schedule_mode(i, cfg.group_size), i / cfg.group_size, &st);
    f = {std::move(out.f_p), std::move(out.f_m)};
    if (trace) trace->blocks.push_back(st);
  }
  if (trace) {
    trace->stats = cache.stats();
    trace->warnings = cache.warnings();
  }
  return f;
}

inline Tensor forward(const Tensor& pan, const Tensor& ms, const ModelWeights& w,
                      const ModelConfig& cfg, ForwardTrace* trace = nullptr,
                      const MixerConfig* mixer = nullptr) {
  if (w.blocks.size() != cfg.blocks) throw DimensionError("forward: weights/config block count");
  Features f = run_blocks(encode(pan, ms, w, cfg), w, cfg, trace, mixer);
  Tensor out = run_decoder(f.f_m, w.dec);
  const Tensor up = bilinear_upsample(ms, cfg.scale);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += up[i];
  return out;
}

}  // namespace msps
