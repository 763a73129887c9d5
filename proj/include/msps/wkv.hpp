#pragma once

// Bidirectional WKV attention.
//
//   wkv_t = ( sum_{i != t} exp(-(|t-i|-1) w/T + k_i) v_i + exp(u + k_t) v_t )
//         / ( sum_{i != t} exp(-(|t-i|-1) w/T + k_i)     + exp(u + k_t)     )
//
// evaluated independently per channel. bi_wkv_reference is the direct O(T^2)
// form; bi_wkv_linear runs a forward and a backward decayed scan in
// log-shifted form and is O(T). re_wkv alternates raster/column scans over a
// 2-D grid, and WkvCache carries results between blocks for sharing and
// momentum.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "msps/errors.hpp"
#include "msps/tensor.hpp"

namespace msps {

struct WkvParams {
  Tensor w;  // [C] per-channel decay, >= 0
  Tensor u;  // [C] per-channel self bonus
  // Length used in the w/T normalization; 0 means "the sequence length".
  std::size_t decay_length = 0;
  // Fault-injection hook: negates the per-step decay multiplier in the
  // linear scan. Only the self-check uses it.
  bool debug_flip_decay_sign = false;

  static WkvParams from_raw(const Tensor& raw_w, const Tensor& u) {
    return WkvParams{map(raw_w, [](double v) { return std::exp(v); }), u};
  }
};

// Instrumentation shared by kernels, caches and the block schedule.
struct WkvStats {
  std::size_t kernel_calls = 0;       // bi_wkv_* invocations
  std::size_t fresh_evaluations = 0;  // mixer-level wkv computations
  std::size_t shares = 0;
  std::size_t moment_combines = 0;
};

namespace detail {

inline void check_wkv_inputs(const Tensor& k, const Tensor& v, const WkvParams& p) {
  if (k.rank() != 2 || k.shape() != v.shape())
    throw DimensionError("bi_wkv: K " + shape_str(k.shape()) + " and V " + shape_str(v.shape()) +
                         " must be equal T x C");
  if (k.dim(0) == 0) throw EmptySequenceError("bi_wkv: empty sequence");
  const std::size_t c = k.dim(1);
  if (p.w.size() != c || p.u.size() != c) throw DimensionError("bi_wkv: w/u must have C entries");
}

inline double decay_per_step(const WkvParams& p, std::size_t ch, std::size_t t) {
  const double len = static_cast<double>(p.decay_length ? p.decay_length : t);
  return p.w[ch] / len;
}

}  // namespace detail

// Direct evaluation; per output position the exponents are shifted by their
// maximum before exponentiation.
inline Tensor bi_wkv_reference(const Tensor& k, const Tensor& v, const WkvParams& p,
                               WkvStats* stats = nullptr) {
  detail::check_wkv_inputs(k, v, p);
  if (stats) ++stats->kernel_calls;
  const std::size_t n = k.dim(0), c = k.dim(1);
  Tensor out({n, c});
  std::vector<double> expo(n);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double d = detail::decay_per_step(p, ch, n);
    for (std::size_t t = 0; t < n; ++t) {
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) {
        const double dist = static_cast<double>(i > t ? i - t : t - i);
        expo[i] = i == t ? p.u[ch] + k.at(t, ch) : -(dist - 1.0) * d + k.at(i, ch);
        peak = std::max(peak, expo[i]);
      }
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double e = std::exp(expo[i] - peak);
        num += e * v.at(i, ch);
        den += e;
      }
      out.at(t, ch) = num / den;
    }
  }
  return out;
}

// O(T) evaluation. State (a, b, p) represents a * e^p, b * e^p.
inline Tensor bi_wkv_linear(const Tensor& k, const Tensor& v, const WkvParams& p,
                            WkvStats* stats = nullptr) {
  detail::check_wkv_inputs(k, v, p);
  if (stats) ++stats->kernel_calls;
  const std::size_t n = k.dim(0), c = k.dim(1);
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  Tensor out({n, c});
  // Forward state per position as interleaved (a, b, p) triples. The buffer
  // is reused across calls so long sequences do not pay for fresh pages.
  thread_local std::vector<double> scratch;
  if (scratch.size() < 3 * n) scratch.resize(3 * n);
  double* fwd = scratch.data();
  const double sign = p.debug_flip_decay_sign ? -1.0 : 1.0;

  for (std::size_t ch = 0; ch < c; ++ch) {
    const double d = detail::decay_per_step(p, ch, n);

    // forward: A_t = sum_{i<t} exp(-(t-1-i) d + k_i) v_i
    double a = 0.0, b = 0.0, pe = kNegInf;
    for (std::size_t t = 0; t < n; ++t) {
      fwd[3 * t] = a;
      fwd[3 * t + 1] = b;
      fwd[3 * t + 2] = pe;
      const double kt = k.at(t, ch);
      const double decayed = pe - d;
      const double q = std::max(decayed, kt);
      const double e1 = pe == kNegInf ? 0.0 : sign * std::exp(decayed - q);
      const double e2 = std::exp(kt - q);
      a = e1 * a + e2 * v.at(t, ch);
      b = e1 * b + e2;
      pe = q;
    }

    // backward: B_t = sum_{i>t} exp(-(i-t-1) d + k_i) v_i, combined on the fly
    a = 0.0;
    b = 0.0;
    pe = kNegInf;
    for (std::size_t r = n; r-- > 0;) {
      const double kt = k.at(r, ch);
      const double self = p.u[ch] + kt;
      const double fa = fwd[3 * r], fb = fwd[3 * r + 1], fp = fwd[3 * r + 2];
      const double q = std::max({fp, pe, self});
      const double ef = fp == kNegInf ? 0.0 : std::exp(fp - q);
      const double eb = pe == kNegInf ? 0.0 : std::exp(pe - q);
      const double es = std::exp(self - q);
      const double num = ef * fa + eb * a + es * v.at(r, ch);
      const double den = ef * fb + eb * b + es;
      out.at(r, ch) = num / den;

      const double decayed = pe - d;
      const double q2 = std::max(decayed, kt);
      const double e1 = pe == kNegInf ? 0.0 : sign * std::exp(decayed - q2);
      const double e2 = std::exp(kt - q2);
      a = e1 * a + e2 * v.at(r, ch);
      b = e1 * b + e2;
      pe = q2;
    }
  }
  return out;
}

// m alternating scans over a 2-D grid: odd iterations flatten row-major,
// even iterations column-major. Each iteration's output becomes the next
// iteration's values; keys stay fixed.
inline Tensor re_wkv(const Tensor& k2d, const Tensor& v2d, const WkvParams& p, std::size_t m,
                     WkvStats* stats = nullptr) {
  if (m == 0) throw ParameterError("re_wkv: iteration count m must be >= 1");
  require_hwc(k2d, "re_wkv");
  require_same_shape(k2d, v2d, "re_wkv");
  const std::size_t h = k2d.dim(0), w = k2d.dim(1);
  const Tensor kt = transpose_hw(k2d);
  Tensor cur = v2d;
  for (std::size_t it = 1; it <= m; ++it) {
    if (it % 2 == 1) {
      cur = unflatten_hw(bi_wkv_linear(flatten_hw(k2d), flatten_hw(cur), p, stats), h, w);
    } else {
      const Tensor vt = transpose_hw(cur);
      cur = transpose_hw(unflatten_hw(bi_wkv_linear(flatten_hw(kt), flatten_hw(vt), p, stats), w, h));
    }
  }
  return cur;
}

// ---------------------------------------------------------------------------
// sharing / momentum

// What one fresh spatial-mixer evaluation leaves behind, in raster order:
// `wkv` is the base-token output (pre-gate), `context` the broadcast
// prototype + global contribution for each token.
struct WkvEntry {
  Tensor wkv;
  Tensor context;
};

inline double clamp_unit(double alpha, std::vector<std::string>* warnings) {
  if (alpha >= 0.0 && alpha <= 1.0) return alpha;
  const double c = std::isnan(alpha) ? 0.0 : std::clamp(alpha, 0.0, 1.0);
  if (warnings)
    warnings->push_back("momentum alpha " + std::to_string(alpha) + " clamped to " +
                        std::to_string(c));
  return c;
}

// alpha * prev + (1 - alpha) * half; alpha outside [0, 1] is clamped and a
// warning is recorded.
inline Tensor wkv_moment(const Tensor& prev, const Tensor& half, double alpha,
                         std::vector<std::string>* warnings = nullptr) {
  require_same_shape(prev, half, "wkv_moment");
  const double a = clamp_unit(alpha, warnings);
  if (a == 0.0) return half;
  if (a == 1.0) return prev;
  return zip(prev, half, [a](double x, double y) { return a * x + (1.0 - a) * y; });
}

class WkvCache {
 public:
  explicit WkvCache(double alpha = 0.5) : alpha_(clamp_unit(alpha, &warnings_)) {}

  bool populated() const { return entry_.has_value(); }
  std::size_t group_index() const { return group_; }
  double alpha() const { return alpha_; }
  void set_alpha(double a) { alpha_ = clamp_unit(a, &warnings_); }

  void store(std::size_t group, WkvEntry entry) {
    group_ = group;
    entry_ = std::move(entry);
  }

  const WkvEntry& entry() const {
    if (!entry_) throw StateError("wkv cache is empty");
    return *entry_;
  }

  WkvStats& stats() { return stats_; }
  const WkvStats& stats() const { return stats_; }
  std::vector<std::string>& warnings() { return warnings_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  std::size_t group_ = 0;
  std::optional<WkvEntry> entry_;
  double alpha_;
  WkvStats stats_;
  std::vector<std::string> warnings_;
};

// Reuses the previous layer's result without touching the kernel.
inline const WkvEntry& wkv_share(WkvCache& cache) {
  const WkvEntry& e = cache.entry();
  ++cache.stats().shares;
  return e;
}

// Blends the cached group's entry with a freshly computed one and stores the
// result as the new group's entry.
inline const WkvEntry& wkv_moment_update(WkvCache& cache, std::size_t group, WkvEntry half) {
  const WkvEntry& prev = cache.entry();
  WkvEntry mixed{wkv_moment(prev.wkv, half.wkv, cache.alpha(), &cache.warnings()),
                 wkv_moment(prev.context, half.context, cache.alpha(), &cache.warnings())};
  ++cache.stats().moment_combines;
  cache.store(group, std::move(mixed));
  return cache.entry();
}

}  // namespace msps
