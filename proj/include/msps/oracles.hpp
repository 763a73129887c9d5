#pragma once

// Independent brute-force recomputations used by the self-check, the unit
// tests and the acceptance suite. Each one is written from the defining
// formula with plain loops and shares no code path with the routine it
// checks beyond the Tensor container.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "msps/inn.hpp"
#include "msps/lsh.hpp"
#include "msps/model.hpp"
#include "msps/random.hpp"
#include "msps/semantic_scan.hpp"
#include "msps/tensor.hpp"

namespace msps::oracle {

inline Tensor matmul(const Tensor& x, const Tensor& w, const Tensor* bias = nullptr) {
  const std::size_t n = x.dim(0), k = x.dim(1), m = w.dim(1);
  Tensor y({n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      long double s = bias ? (*bias)[j] : 0.0;
      for (std::size_t l = 0; l < k; ++l)
        s += static_cast<long double>(x[i * k + l]) * w[l * m + j];
      y[i * m + j] = static_cast<double>(s);
    }
  return y;
}

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

inline Moments moments(const std::vector<double>& v) {
  long double s = 0.0;
  for (double x : v) s += x;
  const long double mean = s / static_cast<long double>(v.size());
  long double q = 0.0;
  for (double x : v) q += (x - mean) * (x - mean);
  return {static_cast<double>(mean), static_cast<double>(q / static_cast<long double>(v.size()))};
}

// First C/2 channels standardized over the image, rest copied.
inline Tensor half_instance_norm(const Tensor& x, double eps) {
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  Tensor y = x;
  for (std::size_t ch = 0; ch < c / 2; ++ch) {
    std::vector<double> vals;
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) vals.push_back(x.at(i, j, ch));
    const Moments m = moments(vals);
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        y.at(i, j, ch) = (x.at(i, j, ch) - m.mean) / std::sqrt(m.var + eps);
  }
  return y;
}

// Pads by replication into an explicit (H+2) x (W+2) canvas, then slides.
inline Tensor depthwise(const Tensor& x, const Tensor& k) {
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  Tensor pad({h + 2, w + 2, c});
  for (std::size_t i = 0; i < h + 2; ++i)
    for (std::size_t j = 0; j < w + 2; ++j) {
      const std::size_t si = i == 0 ? 0 : (i - 1 >= h ? h - 1 : i - 1);
      const std::size_t sj = j == 0 ? 0 : (j - 1 >= w ? w - 1 : j - 1);
      for (std::size_t ch = 0; ch < c; ++ch) pad.at(i, j, ch) = x.at(si, sj, ch);
    }
  Tensor y(x.shape());
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (std::size_t a = 0; a < 3; ++a)
          for (std::size_t b = 0; b < 3; ++b) s += k.at(a, b, ch) * pad.at(i + a, j + b, ch);
        y.at(i, j, ch) = s;
      }
  return y;
}

// 2x2 -> 4x4 with half-pixel centres: source rows for output rows 0..3 sit
// at 0, 0.25, 0.75, 1 (clamped at both ends).
inline Tensor bilinear_2x2_to_4x4(const Tensor& x) {
  static constexpr double wt[4][2] = {{1.0, 0.0}, {0.75, 0.25}, {0.25, 0.75}, {0.0, 1.0}};
  const std::size_t c = x.dim(2);
  Tensor y({4, 4, c});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (std::size_t a = 0; a < 2; ++a)
          for (std::size_t b = 0; b < 2; ++b) s += wt[i][a] * wt[j][b] * x.at(a, b, ch);
        y.at(i, j, ch) = s;
      }
  return y;
}

// Direct double loop in extended precision without any max shift; only
// meant for moderate keys.
inline Tensor bi_wkv(const Tensor& k, const Tensor& v, const Tensor& w, const Tensor& u) {
  const std::size_t n = k.dim(0), c = k.dim(1);
  Tensor out({n, c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    const long double d = static_cast<long double>(w[ch]) / static_cast<long double>(n);
    for (std::size_t t = 0; t < n; ++t) {
      long double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        long double e;
        if (i == t) {
          e = std::exp(static_cast<long double>(u[ch]) + k.at(i, ch));
        } else {
          const long double dist = i > t ? static_cast<long double>(i - t) : static_cast<long double>(t - i);
          e = std::exp(-(dist - 1.0L) * d + k.at(i, ch));
        }
        num += e * v.at(i, ch);
        den += e;
      }
      out.at(t, ch) = static_cast<double>(num / den);
    }
  }
  return out;
}

// Re-WKV with m = 2 written out: one scan over the row-major sequence, then
// one over the column-major sequence, using an arbitrary 1-D kernel.
template <typename Kernel>
Tensor two_pass_scan(const Tensor& k2d, const Tensor& v2d, Kernel&& kernel) {
  const std::size_t h = k2d.dim(0), w = k2d.dim(1), c = k2d.dim(2);
  auto gather = [&](const Tensor& src, bool columns) {
    Tensor s({h * w, c});
    std::size_t t = 0;
    if (!columns) {
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j, ++t)
          for (std::size_t ch = 0; ch < c; ++ch) s.at(t, ch) = src.at(i, j, ch);
    } else {
      for (std::size_t j = 0; j < w; ++j)
        for (std::size_t i = 0; i < h; ++i, ++t)
          for (std::size_t ch = 0; ch < c; ++ch) s.at(t, ch) = src.at(i, j, ch);
    }
    return s;
  };
  auto scatter = [&](const Tensor& s, bool columns) {
    Tensor dst({h, w, c});
    std::size_t t = 0;
    if (!columns) {
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j, ++t)
          for (std::size_t ch = 0; ch < c; ++ch) dst.at(i, j, ch) = s.at(t, ch);
    } else {
      for (std::size_t j = 0; j < w; ++j)
        for (std::size_t i = 0; i < h; ++i, ++t)
          for (std::size_t ch = 0; ch < c; ++ch) dst.at(i, j, ch) = s.at(t, ch);
    }
    return dst;
  };
  const Tensor first = scatter(kernel(gather(k2d, false), gather(v2d, false)), false);
  return scatter(kernel(gather(k2d, true), gather(first, true)), true);
}

// Mean of each cluster's members, accumulated token by token.
inline Tensor cluster_means(const Tensor& v, const ClusterAssignment& asg) {
  const std::size_t d = v.dim(1), c = asg.count();
  Tensor sum({c, d});
  std::vector<std::size_t> count(c, 0);
  for (std::size_t t = 0; t < v.dim(0); ++t) {
    const std::size_t g = asg.cluster_of[t];
    ++count[g];
    for (std::size_t j = 0; j < d; ++j) sum.at(g, j) += v.at(t, j);
  }
  for (std::size_t g = 0; g < c; ++g)
    for (std::size_t j = 0; j < d; ++j) sum.at(g, j) /= static_cast<double>(count[g]);
  return sum;
}

inline Tensor scale_rows(const Tensor& p, const Tensor& w) {
  Tensor y(p.shape());
  for (std::size_t i = 0; i < p.dim(0); ++i)
    for (std::size_t j = 0; j < p.dim(1); ++j) y.at(i, j) = w[i] * p.at(i, j);
  return y;
}

// Appended rows of the enhanced sequence, from the raster-order tokens x:
// cluster means, global mean, then the register map averaged over tokens.
inline Tensor summary_rows(const Tensor& x, const ClusterAssignment& asg, const Tensor& wr,
                           const Tensor& br) {
  const std::size_t n = x.dim(0), d = x.dim(1), c = asg.count();
  Tensor out({c + 2, d});
  const Tensor means = cluster_means(x, asg);
  for (std::size_t g = 0; g < c; ++g)
    for (std::size_t j = 0; j < d; ++j) out.at(g, j) = means.at(g, j);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t j = 0; j < d; ++j) out.at(c, j) += x.at(t, j) / static_cast<double>(n);
  // per-token register map, then pooled
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t j = 0; j < d; ++j) {
      double s = br[j];
      for (std::size_t l = 0; l < d; ++l) s += x.at(t, l) * wr.at(l, j);
      out.at(c + 1, j) += s / static_cast<double>(n);
    }
  return out;
}

// Token by token: base + prototype of its own cluster + global.
inline Tensor broadcast(const Tensor& base, const Tensor& proto, const Tensor& global,
                        const ClusterAssignment& asg) {
  Tensor out(base.shape());
  const std::size_t d = base.dim(1);
  for (std::size_t p = 0; p < base.dim(0); ++p) {
    const std::size_t g = asg.cluster_of[asg.order[p]];
    for (std::size_t j = 0; j < d; ++j) out.at(p, j) = base.at(p, j) + proto.at(g, j) + global[j];
  }
  return out;
}

// Single-token spatial mixer with identity registers: the enhanced sequence
// is four copies of v (token, prototype, global, register), so every
// iteration returns v; gated output is sigmoid(r) v plus prototype and
// global contributions v + v.
inline Tensor single_token_mixer(const Tensor& xm, const Tensor& xp, const Tensor& wr,
                                 const Tensor& wv, const Tensor& wo, bool semantic) {
  const std::size_t d = wr.dim(0);
  const Tensor r = matmul(xm, wr);
  const Tensor v = matmul(xp, wv);
  Tensor g({1, d});
  for (std::size_t j = 0; j < d; ++j) {
    const double s = 1.0 / (1.0 + std::exp(-r[j]));
    g[j] = s * v[j] + (semantic ? 2.0 * v[j] : 0.0);
  }
  return matmul(g, wo);
}

// Hand sums for an all-ones CDC kernel on a vertical step (columns < edge
// hold `lo`, the rest `hi`): only the two columns touching the step respond.
inline Tensor cdc_step_response(std::size_t h, std::size_t w, std::size_t edge, double lo, double hi) {
  Tensor y({h, w, 1});
  for (std::size_t i = 0; i < h; ++i) {
    if (edge >= 1) y.at(i, edge - 1, 0) = 3.0 * (lo - hi);
    if (edge < w) y.at(i, edge, 0) = 3.0 * (hi - lo);
  }
  return y;
}

// One-hot kernels built from the shift directions: left, right, up, down.
inline Tensor qshift_kernels(std::size_t c) {
  const std::size_t k = c / 4;
  // content moves by (dy, dx) => reads from (-dy, -dx) => tap (1 - dy, 1 - dx)
  const int moves[4][2] = {{0, -1}, {0, 1}, {-1, 0}, {1, 0}};
  Tensor kern({3, 3, c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    const auto* m = moves[ch / k];
    kern.at(static_cast<std::size_t>(1 - m[0]), static_cast<std::size_t>(1 - m[1]), ch) = 1.0;
  }
  return kern;
}

// INN on a constant field: shifts of constants are constants, so the six
// coupling equations reduce to per-channel scalar arithmetic.
inline Tensor inn_constant(std::size_t h, std::size_t w, const std::vector<double>& quarter_values,
                           const InnParams& p) {
  const std::size_t k = p.f[0].scale.size();
  Tensor y({h, w, 4 * k});
  for (std::size_t ch = 0; ch < k; ++ch) {
    const double x1 = quarter_values[0], x2 = quarter_values[1];
    const double x3 = quarter_values[2], x4 = quarter_values[3];
    const double y1 = x1 + p.f[0].scale[ch] * x2;
    const double z2 = p.g[0].scale[ch] * y1 + x2;
    const double y2 = z2 + p.f[1].scale[ch] * x3;
    const double z3 = p.g[1].scale[ch] * y2 + x3;
    const double y3 = z3 + p.f[2].scale[ch] * x4;
    const double z4 = p.g[2].scale[ch] * y3 + x4;
    const double vals[4] = {y1, y2, y3, z4};
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        for (std::size_t q = 0; q < 4; ++q) y.at(i, j, q * k + ch) = vals[q];
  }
  return y;
}

// Learnable scalar count written out from the architecture.
inline std::size_t parameter_count(const ModelConfig& c) {
  const std::size_t d = c.channels, e = c.expansion, b = c.bands;
  auto encoder = [d](std::size_t cin) { return 9 * cin * d + d + d + 6 * (d / 4); };
  const std::size_t spatial = 4 * d * d + 2 * d + 2 * (d * d + d) + 9 * d;
  const std::size_t channel = 2 * (2 * d) + 2 * (2 * d * e * d) + e * d * d;
  const std::size_t block = 4 * d + spatial + channel;
  const std::size_t decoder = 9 * d * d + d + 9 * d * b + b;
  return encoder(1) + encoder(b) + c.blocks * block + decoder + 1;
}

struct ScheduleCounts {
  std::size_t fresh, shares, moments;
};

inline ScheduleCounts schedule(std::size_t blocks, std::size_t group_size) {
  const std::size_t groups = (blocks + group_size - 1) / group_size;
  return {groups, blocks - groups, groups - 1};
}

inline std::vector<std::size_t> random_permutation(std::size_t n, SplitMix64& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.next_u64() % i]);
  return p;
}

// Random partition of [0, n) into c non-empty groups (members ascending).
inline ClusterAssignment random_assignment(std::size_t n, std::size_t c, SplitMix64& rng) {
  std::vector<std::vector<std::size_t>> groups(c);
  const auto perm = random_permutation(n, rng);
  for (std::size_t i = 0; i < n; ++i) groups[i < c ? i : rng.next_u64() % c].push_back(perm[i]);
  for (auto& g : groups) std::sort(g.begin(), g.end());
  return ClusterAssignment::from_groups(std::move(groups));
}

}  // namespace msps::oracle
