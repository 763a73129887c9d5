#pragma once

// Exact Euclidean LSH over token vectors.
//
// One round hashes v to floor((a . v + b) / r) with a ~ N(0, I) and
// b ~ U(0, r). L rounds are combined in radix B after each round's value is
// brought into [0, B): for a single vector the floor value is reduced modulo
// B directly; when clustering a batch, each round is first offset by its
// minimum over the batch so that a spread of up to B buckets never aliases.
//
// Family draws (per round i = 0..L-1, from SplitMix64(seed)): the D entries
// of a_i via normal(), then b_i = r * uniform().

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <vector>

#include "msps/errors.hpp"
#include "msps/random.hpp"
#include "msps/tensor.hpp"

namespace msps {

struct LshConfig {
  double r = 2.0;           // bucket width
  std::size_t rounds = 2;   // L
  std::size_t radix = 8;    // B
  std::uint64_t seed = 0x5EED;

  void validate() const {
    if (!(r > 0.0) || !std::isfinite(r)) throw ParameterError("lsh: bucket width r must be > 0");
    if (rounds == 0) throw ParameterError("lsh: rounds must be >= 1");
    if (radix < 2) throw ParameterError("lsh: radix must be >= 2");
    const double bits = static_cast<double>(rounds) * std::log2(static_cast<double>(radix));
    if (bits >= 63.0) throw ParameterError("lsh: radix^rounds does not fit in 63 bits");
  }
};

struct LshFamily {
  std::vector<Tensor> a;  // per round, [D]
  std::vector<double> b;
  double r = 1.0;
  std::size_t radix = 2;
};

inline LshFamily make_lsh_family(const LshConfig& cfg, std::size_t dim) {
  cfg.validate();
  SplitMix64 rng(cfg.seed);
  LshFamily f;
  f.r = cfg.r;
  f.radix = cfg.radix;
  for (std::size_t i = 0; i < cfg.rounds; ++i) {
    f.a.push_back(random_normal({dim}, rng));
    f.b.push_back(cfg.r * rng.uniform());
  }
  return f;
}

inline std::int64_t e2lsh_hash(std::span<const double> v, std::span<const double> a, double b,
                               double r) {
  if (v.size() != a.size()) throw DimensionError("e2lsh_hash: vector/projection length mismatch");
  if (!(r > 0.0)) throw ParameterError("e2lsh_hash: r must be > 0");
  double dot = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) dot += a[i] * v[i];
  return static_cast<std::int64_t>(std::floor((dot + b) / r));
}

inline std::int64_t e2lsh_hash(const Tensor& v, const Tensor& a, double b, double r) {
  return e2lsh_hash(v.data(), a.data(), b, r);
}

inline std::uint64_t floor_mod(std::int64_t x, std::size_t m) {
  const auto mm = static_cast<std::int64_t>(m);
  const std::int64_t q = x % mm;
  return static_cast<std::uint64_t>(q < 0 ? q + mm : q);
}

// sum_i B^i * ((h_i - offset_i) mod B)
inline std::uint64_t combine_rounds(std::span<const std::int64_t> hashes,
                                    std::span<const std::int64_t> offsets, std::size_t radix) {
  std::uint64_t code = 0, place = 1;
  for (std::size_t i = 0; i < hashes.size(); ++i) {
    const std::int64_t off = offsets.empty() ? 0 : offsets[i];
    code += place * floor_mod(hashes[i] - off, radix);
    place *= radix;
  }
  return code;
}

inline std::vector<std::int64_t> round_hashes(std::span<const double> v, const LshFamily& f) {
  std::vector<std::int64_t> h(f.a.size());
  for (std::size_t i = 0; i < f.a.size(); ++i) h[i] = e2lsh_hash(v, f.a[i].data(), f.b[i], f.r);
  return h;
}

inline std::uint64_t multi_round_hash(const Tensor& v, const LshConfig& cfg) {
  const LshFamily f = make_lsh_family(cfg, v.size());
  const auto h = round_hashes(v.data(), f);
  return combine_rounds(h, {}, f.radix);
}

// ---------------------------------------------------------------------------

struct ClusterAssignment {
  std::vector<std::size_t> order;                // semantic scan order
  std::vector<std::vector<std::size_t>> groups;  // members, ascending index
  std::vector<std::size_t> cluster_of;           // token -> cluster
  std::vector<std::uint64_t> codes;              // bucket code per cluster

  std::size_t count() const { return groups.size(); }
  std::size_t tokens() const { return cluster_of.size(); }

  // Position in `order` where cluster c starts.
  std::vector<std::size_t> offsets() const {
    std::vector<std::size_t> o(groups.size() + 1, 0);
    for (std::size_t c = 0; c < groups.size(); ++c) o[c + 1] = o[c] + groups[c].size();
    return o;
  }

  static ClusterAssignment from_groups(std::vector<std::vector<std::size_t>> groups,
                                       std::vector<std::uint64_t> codes = {}) {
    ClusterAssignment a;
    std::size_t n = 0;
    for (const auto& g : groups) n += g.size();
    a.cluster_of.assign(n, std::numeric_limits<std::size_t>::max());
    for (std::size_t c = 0; c < groups.size(); ++c) {
      if (groups[c].empty()) throw LayoutError("cluster assignment: empty group");
      for (std::size_t i : groups[c]) {
        if (i >= n || a.cluster_of[i] != std::numeric_limits<std::size_t>::max())
          throw IndexError("cluster assignment: groups do not partition [0, T)");
        a.cluster_of[i] = c;
        a.order.push_back(i);
      }
    }
    if (codes.empty()) {
      codes.resize(groups.size());
      for (std::size_t c = 0; c < codes.size(); ++c) codes[c] = c;
    }
    a.codes = std::move(codes);
    a.groups = std::move(groups);
    return a;
  }
};

namespace detail {

// Merges the smallest bucket into its nearest-code neighbour until at most
// `cap` remain. Ties: smallest size then lowest code; lower neighbour wins.
inline void merge_to_cap(std::vector<std::uint64_t>& codes,
                         std::vector<std::vector<std::size_t>>& groups, std::size_t cap) {
  while (cap > 0 && groups.size() > cap) {
    std::size_t victim = 0;
    for (std::size_t c = 1; c < groups.size(); ++c)
      if (groups[c].size() < groups[victim].size()) victim = c;
    std::size_t target;
    if (victim == 0) {
      target = 1;
    } else if (victim + 1 == groups.size()) {
      target = victim - 1;
    } else {
      const std::uint64_t dl = codes[victim] - codes[victim - 1];
      const std::uint64_t dr = codes[victim + 1] - codes[victim];
      target = dl <= dr ? victim - 1 : victim + 1;
    }
    std::vector<std::size_t> merged;
    merged.reserve(groups[target].size() + groups[victim].size());
    std::merge(groups[target].begin(), groups[target].end(), groups[victim].begin(),
               groups[victim].end(), std::back_inserter(merged));
    groups[target] = std::move(merged);
    groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(victim));
    codes.erase(codes.begin() + static_cast<std::ptrdiff_t>(victim));
  }
}

}  // namespace detail

// Buckets the rows of v[T x D] by combined hash. Clusters are ordered by
// ascending code; members keep raster order. max_clusters = 0 disables the
// cap.
inline ClusterAssignment cluster(const Tensor& v, const LshConfig& cfg,
                                 std::size_t max_clusters = 0) {
  if (v.rank() != 2 || v.dim(0) == 0) throw DimensionError("cluster: need T x D with T >= 1");
  const std::size_t n = v.dim(0);
  const LshFamily f = make_lsh_family(cfg, v.dim(1));
  std::vector<std::vector<std::int64_t>> h(n);
  std::vector<std::int64_t> offsets(cfg.rounds, std::numeric_limits<std::int64_t>::max());
  for (std::size_t t = 0; t < n; ++t) {
    h[t] = round_hashes(v.row(t), f);
    for (std::size_t i = 0; i < cfg.rounds; ++i) offsets[i] = std::min(offsets[i], h[t][i]);
  }
  std::map<std::uint64_t, std::vector<std::size_t>> buckets;
  for (std::size_t t = 0; t < n; ++t) buckets[combine_rounds(h[t], offsets, cfg.radix)].push_back(t);

  std::vector<std::uint64_t> codes;
  std::vector<std::vector<std::size_t>> groups;
  for (auto& [code, members] : buckets) {
    codes.push_back(code);
    groups.push_back(std::move(members));
  }
  detail::merge_to_cap(codes, groups, max_clusters);
  return ClusterAssignment::from_groups(std::move(groups), std::move(codes));
}

// Per-cluster mean of the rows of v (v in original token order).
inline Tensor prototypes(const Tensor& v, const ClusterAssignment& asg) {
  if (v.rank() != 2 || v.dim(0) != asg.tokens())
    throw DimensionError("prototypes: V rows do not match assignment");
  const std::size_t d = v.dim(1);
  Tensor p({asg.count(), d});
  for (std::size_t c = 0; c < asg.count(); ++c) {
    auto pr = p.row(c);
    for (std::size_t i : asg.groups[c]) {
      auto vr = v.row(i);
      for (std::size_t j = 0; j < d; ++j) pr[j] += vr[j];
    }
    const double inv = 1.0 / static_cast<double>(asg.groups[c].size());
    for (double& x : pr) x *= inv;
  }
  return p;
}

// w_j = log(1 + |G_j|) / sum_k log(1 + |G_k|)
inline Tensor density_weights(const ClusterAssignment& asg) {
  if (asg.count() == 0) throw LayoutError("density_weights: no clusters");
  Tensor w({asg.count()});
  double total = 0.0;
  for (std::size_t c = 0; c < asg.count(); ++c) {
    w[c] = std::log(1.0 + static_cast<double>(asg.groups[c].size()));
    total += w[c];
  }
  for (double& x : w.storage()) x /= total;
  return w;
}

inline Tensor weighted_prototypes(const Tensor& p, const Tensor& w) {
  if (p.rank() != 2 || w.size() != p.dim(0))
    throw DimensionError("weighted_prototypes: weight count does not match prototype rows");
  Tensor out = p;
  for (std::size_t c = 0; c < p.dim(0); ++c)
    for (double& x : out.row(c)) x *= w[c];
  return out;
}

}  // namespace msps
