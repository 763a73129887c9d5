#pragma once

// Zeroth-order toy fit over a small subset of the decoder weights, minimizing
// mean |forward - gt|. The search runs in whitened coordinates (see
// whitening_blocks). Each step forms a two-point gradient estimate, either
// along every coordinate (directions = 0) or averaged over that many
// Rademacher directions (SPSA), and feeds it to an Adam-style update. In
// accepted-only mode a proposal is kept only when it lowers the loss, and the
// step size shrinks after each rejection, so the trace is non-increasing.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "msps/model.hpp"
#include "msps/random.hpp"
#include "msps/tensor.hpp"

namespace msps {

struct FitOptions {
  std::size_t steps = 300;
  std::uint64_t seed = 7;
  bool accepted_only = false;
  double perturbation = 1e-3;  // two-point offset
  double step_size = 1e-3;
  std::size_t directions = 0;  // 0: coordinate-wise estimates
  double beta1 = 0.9;
  double beta2 = 0.999;
  bool precondition = true;  // search in whitened coordinates
};

struct FitResult {
  std::vector<double> trace;  // loss before step 0, then after each step
  std::size_t accepted = 0;
  ModelWeights weights;
};

struct ParamRef {
  Tensor* tensor;
  std::size_t index;
};

inline double mean_l1(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mean_l1");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

// 196 scalars: the last decoder layer's taps on the main diagonal of the 3x3
// window (all hidden channels, all bands) plus its biases.
inline constexpr std::size_t kFitTaps[3] = {0, 4, 8};
inline constexpr std::size_t kMaxFitParameters = 200;

inline std::vector<ParamRef> select_fit_parameters(ModelWeights& w) {
  std::vector<ParamRef> refs;
  const std::size_t d = w.dec.w2.dim(2), nb = w.dec.w2.dim(3);
  for (std::size_t tap : kFitTaps)
    for (std::size_t i = 0; i < d * nb; ++i) refs.push_back({&w.dec.w2, tap * d * nb + i});
  for (std::size_t i = 0; i < nb; ++i) refs.push_back({&w.dec.b2, i});
  if (refs.size() > kMaxFitParameters) refs.resize(kMaxFitParameters);
  return refs;
}

// Linear change of variables w = base + map * theta, applied per block of
// parameters that feed the same output band.
struct PreconditionBlock {
  std::vector<std::size_t> members;
  std::vector<double> map;  // row-major members x members
};

inline std::vector<PreconditionBlock> identity_blocks(std::size_t n) {
  std::vector<PreconditionBlock> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = {{i}, {1.0}};
  return out;
}

// The decoder output is affine in the selected scalars, so each one has a
// fixed response image. Per band, with G the (ridge-regularized) Gram
// matrix of those responses and G = L L^T, the map L^-T makes the responses
// orthonormal, which removes the conditioning of the search problem.
inline std::vector<PreconditionBlock> whitening_blocks(const Tensor& hidden, const ModelWeights& w,
                                                       const std::vector<ParamRef>& refs) {
  const std::size_t nb = w.dec.b2.size(), n = refs.size();
  ModelWeights probe = w;
  auto local = select_fit_parameters(probe);
  for (auto& r : local) (*r.tensor)[r.index] = 0.0;
  const Tensor zero = conv3x3(hidden, probe.dec.w2, probe.dec.b2);
  const std::size_t pixels = zero.size() / nb;
  std::vector<std::size_t> band(n);
  std::vector<std::vector<double>> response(n);
  for (std::size_t j = 0; j < n; ++j) {
    (*local[j].tensor)[local[j].index] = 1.0;
    const Tensor out = conv3x3(hidden, probe.dec.w2, probe.dec.b2);
    (*local[j].tensor)[local[j].index] = 0.0;
    band[j] = refs[j].tensor == &w.dec.b2 ? refs[j].index : refs[j].index % nb;
    response[j].resize(pixels);
    for (std::size_t p = 0; p < pixels; ++p) response[j][p] = out[p * nb + band[j]] - zero[p * nb + band[j]];
  }
  std::vector<PreconditionBlock> blocks(nb);
  for (std::size_t j = 0; j < n; ++j) blocks[band[j]].members.push_back(j);
  for (auto& blk : blocks) {
    const std::size_t m = blk.members.size();
    std::vector<double> g(m * m), l(m * m, 0.0);
    double trace = 0.0;
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b <= a; ++b) {
        double s = 0.0;
        for (std::size_t p = 0; p < pixels; ++p) s += response[blk.members[a]][p] * response[blk.members[b]][p];
        g[a * m + b] = g[b * m + a] = s / static_cast<double>(pixels);
        if (a == b) trace += g[a * m + a];
      }
    const double ridge = 1e-6 * trace / static_cast<double>(m) + 1e-300;
    for (std::size_t a = 0; a < m; ++a) g[a * m + a] += ridge;
    // Cholesky
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b <= a; ++b) {
        double s = g[a * m + b];
        for (std::size_t q = 0; q < b; ++q) s -= l[a * m + q] * l[b * m + q];
        l[a * m + b] = a == b ? std::sqrt(s) : s / l[b * m + b];
      }
    // map = L^-T: solve L^T X = I column by column (upper triangular)
    blk.map.assign(m * m, 0.0);
    for (std::size_t col = 0; col < m; ++col)
      for (std::size_t a = m; a-- > 0;) {
        double s = a == col ? 1.0 : 0.0;
        for (std::size_t q = a + 1; q < m; ++q) s -= l[q * m + a] * blk.map[q * m + col];
        blk.map[a * m + col] = s / l[a * m + a];
      }
  }
  return blocks;
}

inline FitResult fit_zeroth_order(const Tensor& pan, const Tensor& ms, const Tensor& gt,
                                  ModelWeights weights, const ModelConfig& cfg,
                                  const FitOptions& opt) {
  if (!(opt.perturbation > 0.0) || !(opt.step_size > 0.0))
    throw ParameterError("fit: perturbation and step size must be > 0");
  check_input_pair(pan, ms, cfg);
  if (gt.shape() != Shape{pan.dim(0), pan.dim(1), cfg.bands})
    throw DimensionError("fit: ground truth must be " + std::to_string(pan.dim(0)) + "x" +
                         std::to_string(pan.dim(1)) + "x" + std::to_string(cfg.bands) +
                         ", found " + shape_str(gt.shape()));
  FitResult res;
  res.weights = std::move(weights);
  auto refs = select_fit_parameters(res.weights);
  const std::size_t n = refs.size();

  // Only the last decoder layer moves, so everything before it is computed once.
  const Tensor feats = run_blocks(encode(pan, ms, res.weights, cfg), res.weights, cfg).f_m;
  const Tensor hidden = silu(conv3x3(feats, res.weights.dec.w1, res.weights.dec.b1));
  const Tensor up = bilinear_upsample(ms, cfg.scale);
  auto loss = [&]() {
    return mean_l1(add(conv3x3(hidden, res.weights.dec.w2, res.weights.dec.b2), up), gt);
  };
  const std::vector<double> base = [&] {
    std::vector<double> b(n);
    for (std::size_t i = 0; i < n; ++i) b[i] = (*refs[i].tensor)[refs[i].index];
    return b;
  }();
  const auto precond = opt.precondition ? whitening_blocks(hidden, res.weights, refs) : identity_blocks(n);
  auto set = [&](const std::vector<double>& th) {
    for (const auto& blk : precond) {
      const std::size_t m = blk.members.size();
      for (std::size_t a = 0; a < m; ++a) {
        double w = base[blk.members[a]];
        for (std::size_t b = 0; b < m; ++b) w += blk.map[a * m + b] * th[blk.members[b]];
        (*refs[blk.members[a]].tensor)[refs[blk.members[a]].index] = w;
      }
    }
  };

  SplitMix64 rng(opt.seed);
  std::vector<double> theta(n, 0.0);
  double current = loss();
  res.trace.push_back(current);
  const double c = opt.perturbation;
  double step = opt.step_size;
  std::vector<double> delta(n), probe(n), g(n), m1(n, 0.0), m2(n, 0.0);
  for (std::size_t k = 1; k <= opt.steps; ++k) {
    std::fill(g.begin(), g.end(), 0.0);
    if (opt.directions == 0) {
      probe = theta;
      for (std::size_t i = 0; i < n; ++i) {
        probe[i] = theta[i] + c;
        set(probe);
        const double lp = loss();
        probe[i] = theta[i] - c;
        set(probe);
        const double lm = loss();
        probe[i] = theta[i];
        g[i] = (lp - lm) / (2.0 * c);
      }
    } else {
      for (std::size_t q = 0; q < opt.directions; ++q) {
        for (auto& v : delta) v = rng.sign();
        for (std::size_t i = 0; i < n; ++i) probe[i] = theta[i] + c * delta[i];
        set(probe);
        const double lp = loss();
        for (std::size_t i = 0; i < n; ++i) probe[i] = theta[i] - c * delta[i];
        set(probe);
        const double lm = loss();
        const double diff = (lp - lm) / (2.0 * c * static_cast<double>(opt.directions));
        for (std::size_t i = 0; i < n; ++i) g[i] += diff * delta[i];
      }
    }
    const double kk = static_cast<double>(k);
    const double bc1 = 1.0 - std::pow(opt.beta1, kk), bc2 = 1.0 - std::pow(opt.beta2, kk);
    for (std::size_t i = 0; i < n; ++i) {
      m1[i] = opt.beta1 * m1[i] + (1.0 - opt.beta1) * g[i];
      m2[i] = opt.beta2 * m2[i] + (1.0 - opt.beta2) * g[i] * g[i];
      probe[i] = theta[i] - step * (m1[i] / bc1) / (std::sqrt(m2[i] / bc2) + 1e-12);
    }
    set(probe);
    const double cand = loss();
    if (!opt.accepted_only || cand < current) {
      theta = probe;
      current = cand;
      ++res.accepted;
      if (opt.accepted_only) step *= 1.05;
    } else {
      step *= 0.7;
    }
    set(theta);
    res.trace.push_back(current);
  }
  return res;
}

}  // namespace msps
