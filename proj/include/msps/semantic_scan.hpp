#pragma once

// Semantic token reorganization around one WKV call:
//
//   reorder by cluster -> append [prototypes; global; register]
//   -> (WKV over the enhanced sequence)
//   -> split -> broadcast prototype/global outputs back onto their tokens
//   -> inverse reorder
//
// Enhanced layout (length T + C + 2):
//   [0, T)        base tokens in semantic order
//   [T, T + C)    one prototype per cluster, in cluster order
//   T + C         global token
//   T + C + 1     register token (output discarded)

#include <cstddef>
#include <vector>

#include "msps/errors.hpp"
#include "msps/lsh.hpp"
#include "msps/tensor.hpp"

namespace msps {

struct RegisterParams {
  Tensor weight;  // [D x D]
  Tensor bias;    // [D]

  static RegisterParams identity(std::size_t d) { return {identity_matrix(d), Tensor({d})}; }
};

struct TokenLayout {
  std::size_t base_tokens = 0;  // T
  std::size_t clusters = 0;     // C
  ClusterAssignment asg;

  std::size_t length() const { return base_tokens + clusters + 2; }
  std::size_t proto_begin() const { return base_tokens; }
  std::size_t global_index() const { return base_tokens + clusters; }
  std::size_t register_index() const { return base_tokens + clusters + 1; }
};

namespace detail {

inline void check_permutation(const std::vector<std::size_t>& order, std::size_t n) {
  if (order.size() != n)
    throw IndexError("permutation length " + std::to_string(order.size()) + " != " +
                     std::to_string(n));
  std::vector<bool> seen(n, false);
  for (std::size_t i : order) {
    if (i >= n || seen[i]) throw IndexError("order is not a permutation of [0, T)");
    seen[i] = true;
  }
}

}  // namespace detail

// Row i of the result is row order[i] of x.
inline Tensor reorder(const Tensor& x, const std::vector<std::size_t>& order) {
  if (x.rank() != 2) throw DimensionError("reorder: need T x D");
  detail::check_permutation(order, x.dim(0));
  Tensor y(x.shape());
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto src = x.row(order[i]);
    std::copy(src.begin(), src.end(), y.row(i).begin());
  }
  return y;
}

inline Tensor inverse_reorder(const Tensor& x, const std::vector<std::size_t>& order) {
  if (x.rank() != 2) throw DimensionError("inverse_reorder: need T x D");
  detail::check_permutation(order, x.dim(0));
  Tensor y(x.shape());
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto src = x.row(i);
    std::copy(src.begin(), src.end(), y.row(order[i]).begin());
  }
  return y;
}

namespace detail {

// [xr; per-cluster means; global mean; register(global mean)]
inline Tensor append_summary_tokens(const Tensor& xr, const ClusterAssignment& asg,
                                    const RegisterParams& rp) {
  if (xr.rank() != 2 || xr.dim(0) != asg.tokens())
    throw DimensionError("token construction: sequence rows do not match assignment");
  if (asg.count() == 0) throw LayoutError("token construction: no clusters");
  const std::size_t n = xr.dim(0), d = xr.dim(1), c = asg.count();
  if (rp.weight.shape() != Shape{d, d} || rp.bias.size() != d)
    throw DimensionError("token construction: register params must be D x D and D");

  Tensor out({n + c + 2, d});
  std::copy(xr.storage().begin(), xr.storage().end(), out.storage().begin());
  const auto off = asg.offsets();
  for (std::size_t k = 0; k < c; ++k) {
    auto pr = out.row(n + k);
    for (std::size_t i = off[k]; i < off[k + 1]; ++i) {
      auto xrow = xr.row(i);
      for (std::size_t j = 0; j < d; ++j) pr[j] += xrow[j];
    }
    const double inv = 1.0 / static_cast<double>(off[k + 1] - off[k]);
    for (double& v : pr) v *= inv;
  }
  Tensor g({1, d});
  for (std::size_t i = 0; i < n; ++i) {
    auto xrow = xr.row(i);
    for (std::size_t j = 0; j < d; ++j) g[j] += xrow[j];
  }
  for (double& v : g.storage()) v /= static_cast<double>(n);
  std::copy(g.storage().begin(), g.storage().end(), out.row(n + c).begin());
  // The per-token register map is affine, so its token mean is the map of
  // the mean token.
  const Tensor r = linear_map(g, rp.weight, rp.bias);
  std::copy(r.storage().begin(), r.storage().end(), out.row(n + c + 1).begin());
  return out;
}

}  // namespace detail

struct EnhancedSequence {
  Tensor tokens;  // [(T + C + 2) x D]
  TokenLayout layout;
};

// vr must already be in asg.order.
inline EnhancedSequence build_tokens(const Tensor& vr, const ClusterAssignment& asg,
                                     const RegisterParams& rp) {
  EnhancedSequence s{detail::append_summary_tokens(vr, asg, rp), {}};
  s.layout.base_tokens = vr.dim(0);
  s.layout.clusters = asg.count();
  s.layout.asg = asg;
  return s;
}

// Keys for the appended slots, built the same way as the values.
inline Tensor extend_keys(const Tensor& kr, const ClusterAssignment& asg,
                          const RegisterParams& key_register) {
  return detail::append_summary_tokens(kr, asg, key_register);
}

struct SplitOutputs {
  Tensor base;    // [T x D], semantic order
  Tensor proto;   // [C x D]
  Tensor global;  // [D]
  Tensor reg;     // [D], discard only
};

inline SplitOutputs split_outputs(const Tensor& o, const TokenLayout& layout) {
  if (layout.clusters == 0) throw LayoutError("split_outputs: layout has no clusters");
  if (o.rank() != 2 || o.dim(0) != layout.length())
    throw LayoutError("split_outputs: sequence length " +
                      std::to_string(o.rank() ? o.dim(0) : 0) + " != layout length " +
                      std::to_string(layout.length()));
  auto parts = split(o, {layout.base_tokens, layout.clusters, 1, 1}, 0);
  const std::size_t d = o.dim(1);
  return {std::move(parts[0]), std::move(parts[1]), parts[2].reshaped({d}),
          parts[3].reshaped({d})};
}

// out[p] = base[p] + proto[cluster(p)] (* weight) + global, semantic order.
inline Tensor broadcast_integrate(const Tensor& base, const Tensor& proto, const Tensor& global,
                                  const TokenLayout& layout,
                                  const Tensor* proto_weights = nullptr) {
  const std::size_t n = layout.base_tokens, c = layout.clusters;
  if (base.rank() != 2 || base.dim(0) != n) throw LayoutError("broadcast_integrate: base rows");
  const std::size_t d = base.dim(1);
  if (proto.shape() != Shape{c, d} || global.size() != d)
    throw LayoutError("broadcast_integrate: prototype/global shapes");
  if (proto_weights && proto_weights->size() != c)
    throw LayoutError("broadcast_integrate: prototype weights");
  Tensor out = base;
  const auto off = layout.asg.offsets();
  for (std::size_t k = 0; k < c; ++k) {
    const double wk = proto_weights ? (*proto_weights)[k] : 1.0;
    auto pr = proto.row(k);
    for (std::size_t p = off[k]; p < off[k + 1]; ++p) {
      auto orow = out.row(p);
      for (std::size_t j = 0; j < d; ++j) orow[j] = orow[j] + wk * pr[j] + global[j];
    }
  }
  return out;
}

}  // namespace msps
