#pragma once

// Spatial mixer (semantic-scan Bi-WKV + CDC high-frequency branch), channel
// mixer, and the block that composes them.

#include <cmath>
#include <cstddef>
#include <utility>

#include "msps/errors.hpp"
#include "msps/lsh.hpp"
#include "msps/semantic_scan.hpp"
#include "msps/tensor.hpp"
#include "msps/wkv.hpp"

namespace msps {

struct Grid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t tokens() const { return height * width; }
};

inline constexpr double kLayerNormEps = 1e-5;

// sum_{i,j} w_ij * (K(y, x) - K(y + i, x + j)) per channel, replicate border.
inline Tensor cdc(const Tensor& k2d, const Tensor& weights) {
  require_hwc(k2d, "cdc");
  const std::size_t h = k2d.dim(0), w = k2d.dim(1), c = k2d.dim(2);
  if (weights.shape() != Shape{3, 3, c})
    throw DimensionError("cdc: weights must be 3x3x" + std::to_string(c));
  Tensor y(k2d.shape());
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const double* center = &k2d.at(i, j, 0);
      double* out = &y.at(i, j, 0);
      for (int di = -1; di <= 1; ++di)
        for (int dj = -1; dj <= 1; ++dj) {
          if (di == 0 && dj == 0) continue;  // centre term is identically zero
          const double* nb = &k2d.at(clamp_index(static_cast<std::ptrdiff_t>(i) + di, h),
                                     clamp_index(static_cast<std::ptrdiff_t>(j) + dj, w), 0);
          const double* wt = &weights.at(di + 1, dj + 1, 0);
          for (std::size_t ch = 0; ch < c; ++ch) out[ch] += wt[ch] * (center[ch] - nb[ch]);
        }
    }
  return y;
}

// Channel quarters move one pixel left, right, up, down respectively.
inline Tensor q_shift(const Tensor& x) {
  require_hwc(x, "q_shift");
  const std::size_t c = x.dim(2);
  if (c % 4 != 0) throw DimensionError("q_shift: channel count " + std::to_string(c) + " not divisible by 4");
  const std::size_t k = c / 4;
  Tensor y = shift_channels(x, 0, -1, 0, k);
  y = shift_channels(y, 0, 1, k, 2 * k);
  y = shift_channels(y, -1, 0, 2 * k, 3 * k);
  return shift_channels(y, 1, 0, 3 * k, 4 * k);
}

// The one-hot depthwise kernels that reproduce q_shift.
inline Tensor q_shift_kernels(std::size_t c) {
  if (c % 4 != 0) throw DimensionError("q_shift_kernels: C not divisible by 4");
  const std::size_t k = c / 4;
  Tensor kern({3, 3, c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    switch (ch / k) {
      case 0: kern.at(1, 2, ch) = 1.0; break;  // out[x] = in[x + 1]
      case 1: kern.at(1, 0, ch) = 1.0; break;
      case 2: kern.at(2, 1, ch) = 1.0; break;
      default: kern.at(0, 1, ch) = 1.0; break;
    }
  }
  return kern;
}

// ---------------------------------------------------------------------------

struct SpatialMixerParams {
  Tensor w_r, w_k, w_v, w_o;  // [D x D]
  Tensor raw_decay;           // [D], decay w = exp(raw_decay)
  Tensor bonus;               // [D], u
  RegisterParams value_register;
  RegisterParams key_register;
  Tensor cdc_weights;  // [3 x 3 x D]

  std::size_t width() const { return w_r.dim(0); }

  static SpatialMixerParams zeros(std::size_t d) {
    return {Tensor({d, d}), Tensor({d, d}), Tensor({d, d}), Tensor({d, d}), Tensor({d}),
            Tensor({d}), {Tensor({d, d}), Tensor({d})}, {Tensor({d, d}), Tensor({d})},
            Tensor({3, 3, d})};
  }
};

struct MixerConfig {
  std::size_t iterations = 2;      // m
  LshConfig lsh;
  std::size_t max_clusters = 8;    // C_max, 0 = unbounded
  bool semantic_scan = true;       // false: plain raster re_wkv, no appended tokens
  bool weight_prototypes = false;  // scale prototype outputs by density weights
  bool debug_flip_decay_sign = false;
};

enum class WkvMode { fresh, share, fresh_with_moment };

struct SpatialMixerTrace {
  std::size_t clusters = 0;
  double register_norm = 0.0;  // L2 norm of the discarded register output
  bool computed = false;       // false when the cached entry was shared
};

namespace detail {

inline WkvParams wkv_params_of(const SpatialMixerParams& p, const MixerConfig& cfg) {
  WkvParams wp = WkvParams::from_raw(p.raw_decay, p.bonus);
  wp.debug_flip_decay_sign = cfg.debug_flip_decay_sign;
  return wp;
}

}  // namespace detail

// Fresh wkv for one layer, expressed in raster order.
inline WkvEntry compute_wkv_entry(const Tensor& k, const Tensor& v, const Grid& grid,
                                  const SpatialMixerParams& p, const MixerConfig& cfg,
                                  WkvStats* stats = nullptr, SpatialMixerTrace* trace = nullptr) {
  if (cfg.iterations == 0) throw ParameterError("spatial mixer: iterations m must be >= 1");
  const WkvParams wp = detail::wkv_params_of(p, cfg);
  if (!cfg.semantic_scan) {
    const Tensor out = re_wkv(unflatten_hw(k, grid.height, grid.width),
                              unflatten_hw(v, grid.height, grid.width), wp, cfg.iterations, stats);
    return {flatten_hw(out), Tensor(v.shape())};
  }
  const ClusterAssignment asg = cluster(v, cfg.lsh, cfg.max_clusters);
  const Tensor vr = reorder(v, asg.order);
  const Tensor kr = reorder(k, asg.order);
  const EnhancedSequence seq = build_tokens(vr, asg, p.value_register);
  const Tensor keys = extend_keys(kr, asg, p.key_register);
  Tensor cur = seq.tokens;
  for (std::size_t it = 0; it < cfg.iterations; ++it) cur = bi_wkv_linear(keys, cur, wp, stats);
  const SplitOutputs parts = split_outputs(cur, seq.layout);

  Tensor weights;
  if (cfg.weight_prototypes) weights = density_weights(asg);
  const Tensor context = broadcast_integrate(Tensor(parts.base.shape()), parts.proto, parts.global,
                                             seq.layout, cfg.weight_prototypes ? &weights : nullptr);
  if (trace) {
    trace->clusters = asg.count();
    double s = 0.0;
    for (double x : parts.reg.storage()) s += x * x;
    trace->register_norm = std::sqrt(s);
  }
  return {inverse_reorder(parts.base, asg.order), inverse_reorder(context, asg.order)};
}

// x_m, x_p: [T x D] (already normalized). Returns O_h = W_O(sigma(R) * wkv +
// context) + CDC(K).
inline Tensor spatial_mixer(const Tensor& x_m, const Tensor& x_p, const Grid& grid,
                            const SpatialMixerParams& p, const MixerConfig& cfg,
                            WkvCache* cache = nullptr, WkvMode mode = WkvMode::fresh,
                            std::size_t group = 0, SpatialMixerTrace* trace = nullptr) {
  require_same_shape(x_m, x_p, "spatial_mixer");
  if (x_m.rank() != 2 || x_m.dim(0) != grid.tokens())
    throw DimensionError("spatial_mixer: T must equal H * W");
  if (mode != WkvMode::fresh && !cache)
    throw StateError("spatial_mixer: sharing/moment requires a cache");

  const Tensor r = linear_map(x_m, p.w_r);
  const Tensor k = linear_map(x_p, p.w_k);
  WkvStats* stats = cache ? &cache->stats() : nullptr;

  WkvEntry local;
  const WkvEntry* entry = nullptr;
  if (mode == WkvMode::share) {
    entry = &wkv_share(*cache);
    if (trace) trace->computed = false;
  } else {
    const Tensor v = linear_map(x_p, p.w_v);
    WkvEntry half = compute_wkv_entry(k, v, grid, p, cfg, stats, trace);
    if (trace) trace->computed = true;
    if (stats) ++stats->fresh_evaluations;
    if (mode == WkvMode::fresh_with_moment) {
      entry = &wkv_moment_update(*cache, group, std::move(half));
    } else if (cache) {
      cache->store(group, std::move(half));
      entry = &cache->entry();
    } else {
      local = std::move(half);
      entry = &local;
    }
  }

  Tensor gated(entry->wkv.shape());
  for (std::size_t i = 0; i < gated.size(); ++i)
    gated[i] = sigmoid(r[i]) * entry->wkv[i] + entry->context[i];
  Tensor out = linear_map(gated, p.w_o);
  const Tensor hf = cdc(unflatten_hw(k, grid.height, grid.width), p.cdc_weights);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += hf[i];
  return out;
}

// ---------------------------------------------------------------------------

struct ChannelMixerParams {
  Tensor ln_gain, ln_bias;  // [2D]
  Tensor w1, w2;            // [2D x eD]
  Tensor w3;                // [eD x D]

  static ChannelMixerParams zeros(std::size_t d, std::size_t expansion) {
    return {Tensor({2 * d}), Tensor({2 * d}), Tensor({2 * d, expansion * d}),
            Tensor({2 * d, expansion * d}), Tensor({expansion * d, d})};
  }
};

// concat -> LN -> q_shift -> W3(sigmoid(W1 x) * relu(W2 x)^2)
inline Tensor channel_mixer(const Tensor& o_sf, const Tensor& f_p, const Grid& grid,
                            const ChannelMixerParams& p) {
  require_same_shape(o_sf, f_p, "channel_mixer");
  const Tensor sc = concat(o_sf, f_p, 1);
  const Tensor normed = layer_norm(sc, p.ln_gain, p.ln_bias, kLayerNormEps);
  const Tensor x = flatten_hw(q_shift(unflatten_hw(normed, grid.height, grid.width)));
  const Tensor r = linear_map(x, p.w1);
  const Tensor v = squared_relu(linear_map(x, p.w2));
  Tensor gated(r.shape());
  for (std::size_t i = 0; i < gated.size(); ++i) gated[i] = sigmoid(r[i]) * v[i];
  return linear_map(gated, p.w3);
}

// ---------------------------------------------------------------------------

struct BlockParams {
  Tensor ln_m_gain, ln_m_bias, ln_p_gain, ln_p_bias;  // [D]
  SpatialMixerParams spatial;
  ChannelMixerParams channel;

  static BlockParams zeros(std::size_t d, std::size_t expansion) {
    return {Tensor({d}), Tensor({d}), Tensor({d}), Tensor({d}), SpatialMixerParams::zeros(d),
            ChannelMixerParams::zeros(d, expansion)};
  }
};

struct BlockOutput {
  Tensor f_p;
  Tensor f_m;
};

// One high-order block on H x W x D features. The MS stream receives both
// mixer outputs through residuals; the PAN stream receives the channel-mixer
// output.
inline BlockOutput mtrwkv_block(const Tensor& f_p, const Tensor& f_m, const BlockParams& p,
                                const MixerConfig& cfg, WkvCache* cache = nullptr,
                                WkvMode mode = WkvMode::fresh, std::size_t group = 0,
                                SpatialMixerTrace* trace = nullptr) {
  require_hwc(f_p, "mtrwkv_block");
  require_same_shape(f_p, f_m, "mtrwkv_block");
  const Grid grid{f_p.dim(0), f_p.dim(1)};
  const Tensor xp = flatten_hw(f_p);
  const Tensor xm = flatten_hw(f_m);
  const Tensor o_h = spatial_mixer(layer_norm(xm, p.ln_m_gain, p.ln_m_bias, kLayerNormEps),
                                   layer_norm(xp, p.ln_p_gain, p.ln_p_bias, kLayerNormEps), grid,
                                   p.spatial, cfg, cache, mode, group, trace);
  const Tensor o_c = channel_mixer(o_h, xp, grid, p.channel);
  Tensor new_m = xm;
  for (std::size_t i = 0; i < new_m.size(); ++i) new_m[i] = new_m[i] + o_h[i] + o_c[i];
  const Tensor new_p = add(xp, o_c);
  return {unflatten_hw(new_p, grid.height, grid.width),
          unflatten_hw(new_m, grid.height, grid.width)};
}

// Block i of a stack partitioned into groups of `group_size`: the first
// block of every group computes wkv, later ones share it, and every group
// after the first blends its fresh wkv with the previous group's.
inline WkvMode schedule_mode(std::size_t block, std::size_t group_size) {
  if (group_size == 0) throw ParameterError("schedule: group_size must be >= 1");
  if (block % group_size != 0) return WkvMode::share;
  return block == 0 ? WkvMode::fresh : WkvMode::fresh_with_moment;
}

}  // namespace msps
