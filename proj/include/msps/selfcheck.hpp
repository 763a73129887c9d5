#pragma once

// The invariant suite behind `msps selfcheck`: every oracle comparison and
// property the library promises, grouped by module. Each check reports the
// measured quantity next to its bound.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "msps/fit.hpp"
#include "msps/inn.hpp"
#include "msps/lsh.hpp"
#include "msps/metrics.hpp"
#include "msps/mixers.hpp"
#include "msps/model.hpp"
#include "msps/oracles.hpp"
#include "msps/random.hpp"
#include "msps/semantic_scan.hpp"
#include "msps/synth.hpp"
#include "msps/tensor.hpp"
#include "msps/wkv.hpp"

namespace msps {

struct CheckResult {
  std::string module;
  std::string name;
  bool passed = false;
  double measured = 0.0;
  std::string bound;  // e.g. "<= 1e-12"
  std::string note;   // exception text or extra detail

  std::string line() const {
    std::ostringstream os;
    os << (passed ? "PASS " : "FAIL ") << std::left << std::setw(16) << module << std::setw(34)
       << name << " measured=" << std::setprecision(6) << measured << "  bound " << bound;
    if (!note.empty()) os << "  (" << note << ")";
    return os.str();
  }
};

struct SelfcheckOptions {
  std::uint64_t seed = 1;
  bool flip_decay_sign = false;  // fault injection for the convex-hull check
  bool include_fit = true;       // the toy fit takes several seconds
};

// ---------------------------------------------------------------------------
// shared helpers (also used by the acceptance suite)

inline WkvParams random_wkv_params(std::size_t c, SplitMix64& rng) {
  return WkvParams::from_raw(random_uniform({c}, rng, -2.0, 2.0), random_uniform({c}, rng, -1.0, 1.0));
}

// Largest |x - lo| overshoot outside [min_i V, max_i V] per channel; <= 0
// means inside the hull.
inline double hull_violation(const Tensor& out, const Tensor& v) {
  const std::size_t n = v.dim(0), c = v.dim(1);
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t ch = 0; ch < c; ++ch) {
    double lo = v.at(0, ch), hi = v.at(0, ch);
    for (std::size_t i = 1; i < n; ++i) {
      lo = std::min(lo, v.at(i, ch));
      hi = std::max(hi, v.at(i, ch));
    }
    for (std::size_t t = 0; t < n; ++t) worst = std::max({worst, lo - out.at(t, ch), out.at(t, ch) - hi});
  }
  return worst;
}

// Fraction of trials in which two points `distance` apart share a combined
// hash, with a fresh family per trial.
inline double collision_rate(double distance, const LshConfig& base, std::size_t dim,
                             std::size_t trials, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::size_t hits = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    LshConfig cfg = base;
    cfg.seed = rng.next_u64();
    Tensor a = random_normal({dim}, rng, 3.0);
    Tensor dir = random_normal({dim}, rng);
    double norm = 0.0;
    for (double x : dir.storage()) norm += x * x;
    norm = std::sqrt(norm);
    Tensor b = a;
    for (std::size_t i = 0; i < dim; ++i) b[i] += distance * dir[i] / norm;
    if (multi_round_hash(a, cfg) == multi_round_hash(b, cfg)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(trials);
}

struct Blobs {
  Tensor points;
  std::vector<std::size_t> label;
};

inline Blobs two_blobs(std::size_t per_blob, std::size_t dim, double separation, double spread,
                       SplitMix64& rng) {
  Blobs b{Tensor({2 * per_blob, dim}), {}};
  Tensor dir = random_normal({dim}, rng);
  double norm = 0.0;
  for (double x : dir.storage()) norm += x * x;
  norm = std::sqrt(norm);
  for (std::size_t i = 0; i < 2 * per_blob; ++i) {
    const std::size_t lab = i % 2;  // interleaved so membership is not contiguous
    b.label.push_back(lab);
    for (std::size_t j = 0; j < dim; ++j)
      b.points.at(i, j) = (lab ? separation * dir[j] / norm : 0.0) + spread * rng.normal();
  }
  return b;
}

// True when the clusters are exactly the label classes.
inline bool recovers_labels(const ClusterAssignment& asg, const std::vector<std::size_t>& label) {
  if (asg.count() != 2) return false;
  for (const auto& g : asg.groups)
    for (std::size_t i : g)
      if (label[i] != label[g.front()]) return false;
  return true;
}

// Pointers to every learnable scalar, in visit order.
inline std::vector<double*> parameter_pointers(ModelWeights& w) {
  std::vector<double*> ptrs;
  visit_parameters(w, [&ptrs](const std::string&, Tensor& t) {
    for (double& x : t.storage()) ptrs.push_back(&x);
  });
  return ptrs;
}

// Central difference of f along `dir` (applied to `params`) with step h.
inline double central_difference(const std::function<double()>& f, const std::vector<double*>& params,
                                 const std::vector<double>& dir, double h) {
  std::vector<double> saved(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) saved[i] = *params[i];
  for (std::size_t i = 0; i < params.size(); ++i) *params[i] = saved[i] + h * dir[i];
  const double up = f();
  for (std::size_t i = 0; i < params.size(); ++i) *params[i] = saved[i] - h * dir[i];
  const double down = f();
  for (std::size_t i = 0; i < params.size(); ++i) *params[i] = saved[i];
  return (up - down) / (2.0 * h);
}

inline double relative_gap(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Model with a small random last decoder layer so that every weight
// reaches the output.
inline ModelWeights probe_weights(const ModelConfig& cfg, std::uint64_t seed) {
  ModelWeights w = parameter_init(cfg, seed);
  SplitMix64 rng(derive_seed(seed, 99));
  w.dec.w2 = random_uniform(w.dec.w2.shape(), rng, -0.05, 0.05);
  return w;
}

// Worst relative disagreement of directional derivatives of the mean-L1
// loss of the full forward between steps h1 and h2.
inline double forward_fd_gap(const SyntheticPair& pair, const ModelConfig& cfg, std::size_t directions,
                             double h1, double h2, std::uint64_t seed) {
  ModelWeights w = probe_weights(cfg, seed);
  auto params = parameter_pointers(w);
  auto loss = [&] { return mean_l1(forward(pair.pan, pair.ms, w, cfg), pair.gt); };
  SplitMix64 rng(derive_seed(seed, 7));
  double worst = 0.0;
  for (std::size_t d = 0; d < directions; ++d) {
    std::vector<double> dir(params.size());
    double norm = 0.0;
    for (double& x : dir) {
      x = rng.normal();
      norm += x * x;
    }
    for (double& x : dir) x /= std::sqrt(norm);
    worst = std::max(worst, relative_gap(central_difference(loss, params, dir, h1),
                                         central_difference(loss, params, dir, h2)));
  }
  return worst;
}

namespace detail {

struct Outcome {
  double measured;
  bool ok;
};

inline Outcome at_most(double measured, double bound) { return {measured, measured <= bound}; }
inline Outcome at_least(double measured, double bound) { return {measured, measured >= bound}; }

inline std::string bound_text(const char* op, double v) {
  std::ostringstream os;
  os << op << ' ' << v;
  return os.str();
}

}  // namespace detail

inline std::vector<CheckResult> run_selfcheck(const SelfcheckOptions& opt = {}) {
  using detail::at_least;
  using detail::at_most;
  using detail::Outcome;
  std::vector<CheckResult> results;
  std::uint64_t tag = 0;
  auto run = [&](const char* module, const char* name, std::string bound,
                 const std::function<Outcome(SplitMix64&)>& body) {
    CheckResult r{module, name, false, 0.0, std::move(bound), {}};
    SplitMix64 rng(derive_seed(opt.seed, ++tag));
    try {
      const Outcome o = body(rng);
      r.measured = o.measured;
      r.passed = o.ok;
    } catch (const std::exception& e) {
      r.note = e.what();
    }
    results.push_back(std::move(r));
  };
  auto le = [](double v) { return detail::bound_text("<=", v); };
  auto ge = [](double v) { return detail::bound_text(">=", v); };

  // ---- tensor-core
  run("tensor-core", "linear_map_vs_triple_loop", le(1e-12), [](SplitMix64& rng) {
    const Tensor x = random_normal({4, 3}, rng), w = random_normal({3, 2}, rng), b = random_normal({2}, rng);
    return at_most(max_abs_diff(linear_map(x, w, &b), oracle::matmul(x, w, &b)), 1e-12);
  });
  run("tensor-core", "layer_norm_moments", le(1e-8), [](SplitMix64& rng) {
    const std::size_t c = 16;
    const Tensor x = random_normal({8, c}, rng, 3.0);
    const Tensor y = layer_norm(x, Tensor({c}, 1.0), Tensor({c}), 0.0);
    double worst_mean = 0.0, worst_var = 0.0;
    for (std::size_t t = 0; t < 8; ++t) {
      const auto row = y.row(t);
      const auto m = oracle::moments({row.begin(), row.end()});
      worst_mean = std::max(worst_mean, std::abs(m.mean));
      worst_var = std::max(worst_var, std::abs(m.var - 1.0));
    }
    return Outcome{std::max(worst_mean, worst_var), worst_mean < 1e-10 && worst_var < 1e-8};
  });
  run("tensor-core", "half_instance_norm_moments", le(1e-12), [](SplitMix64& rng) {
    const Tensor x = random_normal({4, 4, 4}, rng, 2.0);
    return at_most(max_abs_diff(half_instance_norm(x), oracle::half_instance_norm(x, kInstanceNormEps)), 1e-12);
  });
  run("tensor-core", "depthwise_vs_sliding_window", le(1e-12), [](SplitMix64& rng) {
    const Tensor x = random_normal({5, 5, 3}, rng), k = random_normal({3, 3, 3}, rng);
    return at_most(max_abs_diff(depthwise_conv3x3(x, k), oracle::depthwise(x, k)), 1e-12);
  });
  run("tensor-core", "bilinear_ramp_weights", le(1e-15), [](SplitMix64&) {
    const Tensor ramp({2, 2, 1}, std::vector<double>{0.0, 1.0, 2.0, 3.0});
    return at_most(max_abs_diff(bilinear_upsample(ramp, 2), oracle::bilinear_2x2_to_4x4(ramp)), 1e-15);
  });

  // ---- wkv-kernel
  run("wkv-kernel", "reference_vs_double_loop", le(1e-12), [](SplitMix64& rng) {
    const Tensor k = random_normal({4, 3}, rng), v = random_normal({4, 3}, rng);
    const WkvParams p = random_wkv_params(3, rng);
    return at_most(relative_error(bi_wkv_reference(k, v, p), oracle::bi_wkv(k, v, p.w, p.u)), 1e-12);
  });
  run("wkv-kernel", "linear_vs_reference_50", le(1e-10), [&opt](SplitMix64& rng) {
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
      const std::size_t t = 1 + rng.next_u64() % 256, c = 1 + rng.next_u64() % 8;
      const double spread = i % 5 == 0 ? 30.0 : 3.0;
      const Tensor k = random_uniform({t, c}, rng, -spread, spread), v = random_normal({t, c}, rng);
      WkvParams p = random_wkv_params(c, rng);
      p.debug_flip_decay_sign = opt.flip_decay_sign;
      worst = std::max(worst, relative_error(bi_wkv_linear(k, v, p), bi_wkv_reference(k, v, p)));
    }
    return at_most(worst, 1e-10);
  });
  run("wkv-kernel", "zero_decay_vs_reference", le(1e-10), [](SplitMix64& rng) {
    const Tensor k = random_normal({37, 4}, rng), v = random_normal({37, 4}, rng);
    const WkvParams p{Tensor({4}), random_normal({4}, rng)};
    return at_most(relative_error(bi_wkv_linear(k, v, p), bi_wkv_reference(k, v, p)), 1e-10);
  });
  run("wkv-kernel", "re_wkv_two_pass_composition", le(1e-10), [](SplitMix64& rng) {
    const Tensor k = random_normal({3, 3, 2}, rng), v = random_normal({3, 3, 2}, rng);
    const WkvParams p = random_wkv_params(2, rng);
    const Tensor expect = oracle::two_pass_scan(
        k, v, [&p](const Tensor& ks, const Tensor& vs) { return bi_wkv_reference(ks, vs, p); });
    return at_most(relative_error(re_wkv(k, v, p, 2), expect), 1e-10);
  });
  run("wkv-kernel", "share_path_kernel_calls", le(0), [](SplitMix64& rng) {
    WkvCache cache;
    cache.store(0, {random_normal({6, 2}, rng), Tensor({6, 2})});
    const std::size_t before = cache.stats().kernel_calls;
    wkv_share(cache);
    wkv_share(cache);
    const auto calls = static_cast<double>(cache.stats().kernel_calls - before);
    return Outcome{calls, calls == 0.0 && cache.stats().shares == 2};
  });
  run("wkv-kernel", "convex_hull_20", le(1e-12), [&opt](SplitMix64& rng) {
    double worst = -1.0;
    for (int i = 0; i < 20; ++i) {
      const std::size_t t = 2 + rng.next_u64() % 63, c = 1 + rng.next_u64() % 6;
      const Tensor k = random_uniform({t, c}, rng, -4.0, 4.0), v = random_normal({t, c}, rng);
      WkvParams p = random_wkv_params(c, rng);
      p.debug_flip_decay_sign = opt.flip_decay_sign;
      worst = std::max(worst, hull_violation(bi_wkv_linear(k, v, p), v));
    }
    return at_most(worst, 1e-12);
  });

  // ---- lsh-cluster
  run("lsh-cluster", "translation_adds_one", le(0), [](SplitMix64& rng) {
    int bad = 0;
    for (int i = 0; i < 100; ++i) {
      const std::size_t d = 2 + rng.next_u64() % 6;
      const Tensor a = random_normal({d}, rng), v = random_normal({d}, rng, 5.0);
      // exact binary fractions keep the shifted projection exact
      const double r = 0.5 * static_cast<double>(1 + rng.next_u64() % 4);
      const double b = r * 0.375;
      double aa = 0.0;
      for (double x : a.storage()) aa += x * x;
      Tensor shifted = v;
      for (std::size_t j = 0; j < d; ++j) shifted[j] += r * a[j] / aa;
      const auto h0 = e2lsh_hash(v, a, b, r), h1 = e2lsh_hash(shifted, a, b, r);
      // the projection moves by exactly r up to rounding; a rounding flip is
      // only possible within 1e-9 of a cell wall
      double dot = b;
      for (std::size_t j = 0; j < d; ++j) dot += a[j] * v[j];
      const double frac = dot / r - std::floor(dot / r);
      if (h1 != h0 + 1 && frac > 1e-9 && frac < 1 - 1e-9) ++bad;
    }
    return Outcome{static_cast<double>(bad), bad == 0};
  });
  run("lsh-cluster", "near_pair_collision_rate", ge(0.9), [](SplitMix64& rng) {
    LshConfig cfg;
    return at_least(collision_rate(0.05 * cfg.r, cfg, 8, 1000, rng.next_u64()), 0.9);
  });
  run("lsh-cluster", "collision_monotone_in_distance", "p(0.1r) >= p(r) >= p(10r)", [](SplitMix64& rng) {
    LshConfig cfg;
    const std::uint64_t s = rng.next_u64();
    const double p1 = collision_rate(0.1 * cfg.r, cfg, 8, 1000, s);
    const double p2 = collision_rate(1.0 * cfg.r, cfg, 8, 1000, s);
    const double p3 = collision_rate(10.0 * cfg.r, cfg, 8, 1000, s);
    return Outcome{p1 - p3, p1 >= p2 && p2 >= p3};
  });
  run("lsh-cluster", "two_blob_recovery", "exact", [](SplitMix64& rng) {
    LshConfig cfg;
    const Blobs b = two_blobs(32, 4, 100.0 * cfg.r, 1e-3 * cfg.r, rng);
    const ClusterAssignment asg = cluster(b.points, cfg);
    return Outcome{static_cast<double>(asg.count()), recovers_labels(asg, b.label)};
  });
  run("lsh-cluster", "prototypes_vs_cluster_loop", le(1e-12), [](SplitMix64& rng) {
    const Tensor v = random_normal({64, 5}, rng);
    const ClusterAssignment asg = oracle::random_assignment(64, 6, rng);
    return at_most(max_abs_diff(prototypes(v, asg), oracle::cluster_means(v, asg)), 1e-12);
  });
  run("lsh-cluster", "weighted_prototypes_vs_rows", le(0), [](SplitMix64& rng) {
    const Tensor p = random_normal({5, 4}, rng), w = random_uniform({5}, rng, 0.0, 1.0);
    return at_most(max_abs_diff(weighted_prototypes(p, w), oracle::scale_rows(p, w)), 0.0);
  });
  run("lsh-cluster", "density_weights_sum", le(1e-12), [](SplitMix64& rng) {
    const ClusterAssignment asg = oracle::random_assignment(40, 7, rng);
    const Tensor w = density_weights(asg);
    double s = 0.0;
    bool in_range = true;
    for (double x : w.storage()) {
      s += x;
      in_range = in_range && x > 0.0 && x <= 1.0;
    }
    return Outcome{std::abs(s - 1.0), std::abs(s - 1.0) <= 1e-12 && in_range};
  });

  // ---- semantic-scan
  run("semantic-scan", "permutation_round_trip_100", "bit-exact", [](SplitMix64& rng) {
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const std::size_t t = 1 + rng.next_u64() % 1024;
      const Tensor x = random_normal({t, 3}, rng);
      const auto order = oracle::random_permutation(t, rng);
      const Tensor back = inverse_reorder(reorder(x, order), order);
      worst = std::max(worst, back == x ? 0.0 : max_abs_diff(back, x) + 1.0);
    }
    return at_most(worst, 0.0);
  });
  run("semantic-scan", "token_prototypes_vs_oracle", le(1e-12), [](SplitMix64& rng) {
    const Tensor v = random_normal({16, 4}, rng);
    const ClusterAssignment asg = oracle::random_assignment(16, 3, rng);
    const EnhancedSequence seq = build_tokens(reorder(v, asg.order), asg, RegisterParams::identity(4));
    const Tensor protos = slice_rows(seq.tokens, 16, 19);
    return at_most(max_abs_diff(protos, prototypes(v, asg)), 1e-12);
  });
  run("semantic-scan", "extend_keys_group_means", le(1e-12), [](SplitMix64& rng) {
    const Tensor k = random_normal({16, 4}, rng);
    const ClusterAssignment asg = oracle::random_assignment(16, 3, rng);
    const RegisterParams rp{random_normal({4, 4}, rng), random_normal({4}, rng)};
    const Tensor ext = extend_keys(reorder(k, asg.order), asg, rp);
    return at_most(max_abs_diff(slice_rows(ext, 16, 21), oracle::summary_rows(k, asg, rp.weight, rp.bias)),
                   1e-12);
  });
  run("semantic-scan", "broadcast_vs_per_token", le(1e-12), [](SplitMix64& rng) {
    const ClusterAssignment asg = oracle::random_assignment(16, 3, rng);
    TokenLayout layout{16, 3, asg};
    const Tensor base = random_normal({16, 4}, rng), proto = random_normal({3, 4}, rng);
    const Tensor global = random_normal({4}, rng);
    return at_most(max_abs_diff(broadcast_integrate(base, proto, global, layout),
                                oracle::broadcast(base, proto, global, asg)),
                   1e-12);
  });

  // ---- rwkv-mixers
  run("rwkv-mixers", "single_token_closed_form", le(1e-12), [](SplitMix64& rng) {
    const std::size_t d = 4;
    SpatialMixerParams p = SpatialMixerParams::zeros(d);
    p.w_r = random_normal({d, d}, rng);
    p.w_k = random_normal({d, d}, rng);
    p.w_v = random_normal({d, d}, rng);
    p.w_o = random_normal({d, d}, rng);
    p.value_register = RegisterParams::identity(d);
    p.key_register = RegisterParams::identity(d);
    p.cdc_weights = random_normal({3, 3, d}, rng);
    const Tensor xm = random_normal({1, d}, rng), xp = random_normal({1, d}, rng);
    double worst = 0.0;
    for (bool semantic : {true, false}) {
      MixerConfig cfg;
      cfg.semantic_scan = semantic;
      const Tensor got = spatial_mixer(xm, xp, Grid{1, 1}, p, cfg);
      worst = std::max(worst, max_abs_diff(got, oracle::single_token_mixer(xm, xp, p.w_r, p.w_v, p.w_o, semantic)));
    }
    return at_most(worst, 1e-12);
  });
  run("rwkv-mixers", "cdc_step_edge", le(1e-14), [](SplitMix64& rng) {
    const std::size_t h = 5, w = 7, edge = 3;
    const double lo = rng.uniform(-1, 1), hi = lo + 1.0 + rng.uniform();
    Tensor img({h, w, 1});
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) img.at(i, j, 0) = j < edge ? lo : hi;
    const Tensor got = cdc(img, Tensor({3, 3, 1}, 1.0));
    return at_most(max_abs_diff(got, oracle::cdc_step_response(h, w, edge, lo, hi)), 1e-14);
  });
  run("rwkv-mixers", "cdc_constant_is_zero", le(1e-14), [](SplitMix64& rng) {
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      const Tensor img({4, 5, 3}, rng.uniform(-100, 100));
      worst = std::max(worst, max_abs(cdc(img, random_normal({3, 3, 3}, rng))));
    }
    return at_most(worst, 1e-14);
  });
  run("rwkv-mixers", "q_shift_equals_depthwise", "bit-exact", [](SplitMix64& rng) {
    double mismatches = 0.0;
    for (int i = 0; i < 20; ++i) {
      const std::size_t h = 1 + rng.next_u64() % 7, w = 1 + rng.next_u64() % 7, c = 4 * (1 + rng.next_u64() % 3);
      Tensor x({h, w, c});
      for (double& v : x.storage()) v = static_cast<double>(static_cast<int>(rng.next_u64() % 201) - 100);
      if (!(q_shift(x) == depthwise_conv3x3(x, oracle::qshift_kernels(c)))) ++mismatches;
    }
    return at_most(mismatches, 0.0);
  });
  run("rwkv-mixers", "share_block_single_evaluation", "fresh == 1, kernel calls == m", [](SplitMix64& rng) {
    const std::size_t d = 8;
    ModelConfig mc;
    mc.channels = d;
    const ModelWeights w = parameter_init(mc, rng.next_u64());
    const MixerConfig cfg = mc.mixer();
    WkvCache cache;
    const Tensor fp = random_normal({4, 4, d}, rng), fm = random_normal({4, 4, d}, rng);
    auto first = mtrwkv_block(fp, fm, w.blocks[0], cfg, &cache, WkvMode::fresh, 0);
    mtrwkv_block(first.f_p, first.f_m, w.blocks[1], cfg, &cache, WkvMode::share, 0);
    const auto& s = cache.stats();
    return Outcome{static_cast<double>(s.fresh_evaluations),
                   s.fresh_evaluations == 1 && s.kernel_calls == cfg.iterations && s.shares == 1};
  });
  run("rwkv-mixers", "block_fd_consistency", le(1e-3), [](SplitMix64& rng) {
    const std::size_t d = 8;
    ModelConfig mc;
    mc.channels = d;
    ModelWeights w = parameter_init(mc, rng.next_u64());
    BlockParams& bp = w.blocks[0];
    bp.spatial.cdc_weights = random_normal({3, 3, d}, rng, 0.1);
    const MixerConfig cfg = mc.mixer();
    const Tensor fp = random_normal({4, 4, d}, rng), fm = random_normal({4, 4, d}, rng);
    auto loss = [&] {
      const auto out = mtrwkv_block(fp, fm, bp, cfg);
      double s = 0.0;
      for (double x : out.f_m.storage()) s += 0.5 * x * x;
      for (double x : out.f_p.storage()) s += 0.5 * x * x;
      return s;
    };
    Tensor* pool[3] = {&bp.spatial.w_o, &bp.spatial.cdc_weights, &bp.channel.w2};
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      Tensor& t = *pool[i % 3];
      double* entry = &t[rng.next_u64() % t.size()];
      const std::vector<double*> one{entry};
      const std::vector<double> dir{1.0};
      const double g5 = central_difference(loss, one, dir, 1e-5);
      const double g6 = central_difference(loss, one, dir, 1e-6);
      worst = std::max(worst, std::abs(g5 - g6) / std::max({std::abs(g5), std::abs(g6), 1e-6}));
    }
    return at_most(worst, 1e-3);
  });

  // ---- inn-qshift
  run("inn-qshift", "constant_field_closed_form", le(1e-12), [](SplitMix64& rng) {
    const InnParams p = InnParams::random(3, rng);
    const std::vector<double> vals{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    Tensor x({4, 5, 12});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = vals[(i % 12) / 3];
    return at_most(max_abs_diff(inn_forward(x, p), oracle::inn_constant(4, 5, vals, p)), 1e-12);
  });
  run("inn-qshift", "round_trip_4x4x8", le(1e-12), [](SplitMix64& rng) {
    const InnParams p = InnParams::random(2, rng);
    const Tensor x = random_normal({4, 4, 8}, rng);
    return at_most(max_abs_diff(inn_inverse(inn_forward(x, p), p), x), 1e-12);
  });
  run("inn-qshift", "round_trip_100", le(1e-12), [](SplitMix64& rng) {
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const std::size_t k = 1 + rng.next_u64() % 4;
      const InnParams p = InnParams::random(k, rng, 2.0);
      const Tensor x = random_normal({1 + rng.next_u64() % 8, 1 + rng.next_u64() % 8, 4 * k}, rng);
      worst = std::max(worst, max_abs_diff(inn_inverse(inn_forward(x, p), p), x));
    }
    return at_most(worst, 1e-12);
  });
  run("inn-qshift", "reverse_round_trip", le(1e-12), [](SplitMix64& rng) {
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      const InnParams p = InnParams::random(2, rng, 2.0);
      const Tensor y = random_normal({5, 6, 8}, rng);
      worst = std::max(worst, max_abs_diff(inn_forward(inn_inverse(y, p), p), y));
    }
    return at_most(worst, 1e-12);
  });
  run("inn-qshift", "parameter_count_6k", le(0), [](SplitMix64& rng) {
    const std::size_t k = 1 + rng.next_u64() % 8;
    const InnParams p = InnParams::random(k, rng);
    return at_most(std::abs(static_cast<double>(p.parameter_count()) - 6.0 * static_cast<double>(k)), 0.0);
  });

  // ---- pansharp-model
  run("pansharp-model", "schedule_counts_L4_g2", "fresh 2, shares 2, moments 1", [](SplitMix64&) {
    ModelConfig cfg;
    const SyntheticPair pair = synthesize(cfg.seed, 16, cfg.bands, cfg.scale);
    ForwardTrace tr;
    forward(pair.pan, pair.ms, parameter_init(cfg, cfg.seed), cfg, &tr);
    const auto expect = oracle::schedule(cfg.blocks, cfg.group_size);
    const bool ok = tr.stats.fresh_evaluations == expect.fresh && tr.stats.shares == expect.shares &&
                    tr.stats.moment_combines == expect.moments && expect.fresh == 2 &&
                    expect.shares == 2 && expect.moments == 1;
    return Outcome{static_cast<double>(tr.stats.fresh_evaluations), ok};
  });
  run("pansharp-model", "parameter_count_formula", le(0), [](SplitMix64& rng) {
    double worst = 0.0;
    for (int i = 0; i < 4; ++i) {
      ModelConfig cfg;
      cfg.channels = 4 * (1 + rng.next_u64() % 4);
      cfg.blocks = 1 + rng.next_u64() % 4;
      cfg.bands = 1 + rng.next_u64() % 6;
      cfg.expansion = 1 + rng.next_u64() % 3;
      const auto got = parameter_count(parameter_init(cfg, 3));
      worst = std::max(worst, std::abs(static_cast<double>(got) - static_cast<double>(oracle::parameter_count(cfg))));
    }
    return at_most(worst, 0.0);
  });
  run("pansharp-model", "zero_decoder_residual", "bit-exact", [](SplitMix64&) {
    ModelConfig cfg;
    const SyntheticPair pair = synthesize(cfg.seed, 32, cfg.bands, cfg.scale);
    const Tensor out = forward(pair.pan, pair.ms, parameter_init(cfg, cfg.seed), cfg);
    const Tensor up = bilinear_upsample(pair.ms, cfg.scale);
    return Outcome{max_abs_diff(out, up), out == up};
  });
  run("pansharp-model", "forward_fd_stability", le(1e-2), [](SplitMix64& rng) {
    ModelConfig cfg;
    const SyntheticPair pair = synthesize(cfg.seed, 16, cfg.bands, cfg.scale);
    return at_most(forward_fd_gap(pair, cfg, 5, 1e-4, 1e-5, rng.next_u64()), 1e-2);
  });

  // ---- metrics-harness
  run("metrics-harness", "psnr_offset_16_peak_255", le(1e-3), [](SplitMix64& rng) {
    Tensor a({8, 8, 3});
    for (double& v : a.storage()) v = std::floor(rng.uniform(0, 200));
    const Tensor b = map(a, [](double v) { return v + 16.0; });
    // the quoted 24.0494 is a rounding slip for 24.04840; both must hold
    const double got = psnr(a, b, 255.0);
    const double exact_gap = std::abs(got - 20.0 * std::log10(255.0 / 16.0));
    return Outcome{std::abs(got - 24.0494), std::abs(got - 24.0494) <= 1e-3 && exact_gap <= 1e-9};
  });
  run("metrics-harness", "identity_scores", le(1e-12), [](SplitMix64& rng) {
    const Tensor x = random_uniform({16, 16, 3}, rng, 0.1, 1.0);
    const double dev = std::max({std::abs(ssim(x, x) - 1.0), sam(x, x), ergas(x, x, 4.0)});
    return Outcome{dev, dev <= 1e-12 && std::isinf(psnr(x, x, 1.0))};
  });
  run("metrics-harness", "sam_orthogonal", le(1e-12), [](SplitMix64& rng) {
    Tensor r({4, 4, 2}), e({4, 4, 2});
    for (std::size_t p = 0; p < 16; ++p) {
      r[2 * p] = rng.uniform(0.1, 1.0);
      e[2 * p + 1] = rng.uniform(0.1, 1.0);
    }
    return at_most(std::abs(sam(r, e) - std::numbers::pi / 2), 1e-12);
  });

  // ---- cli-runner
  run("cli-runner", "box_filter_idempotence", le(1e-15), [](SplitMix64& rng) {
    const SyntheticPair pair = synthesize(rng.next_u64(), 32, 4, 4);
    return at_most(max_abs_diff(box_downsample(nearest_upsample(pair.ms, 4), 4), pair.ms), 1e-15);
  });
  run("cli-runner", "pan_is_band_mean", le(1e-12), [](SplitMix64& rng) {
    const SyntheticPair pair = synthesize(rng.next_u64(), 16, 4, 4);
    double worst = 0.0;
    for (std::size_t p = 0; p < 256; ++p) {
      double s = 0.0;
      for (std::size_t b = 0; b < 4; ++b) s += pair.gt[p * 4 + b];
      worst = std::max(worst, std::abs(pair.pan[p] - s / 4.0));
    }
    return at_most(worst, 1e-12);
  });
  if (opt.include_fit) {
    run("cli-runner", "toy_fit_halves_loss", le(0.5), [](SplitMix64&) {
      ModelConfig cfg;
      const SyntheticPair pair = synthesize(1, 16, cfg.bands, cfg.scale);
      const FitResult r = fit_zeroth_order(pair.pan, pair.ms, pair.gt, parameter_init(cfg, cfg.seed), cfg, {});
      return at_most(r.trace.back() / r.trace.front(), 0.5);
    });
  }
  return results;
}

inline bool all_passed(const std::vector<CheckResult>& rs) {
  return std::all_of(rs.begin(), rs.end(), [](const CheckResult& r) { return r.passed; });
}

}  // namespace msps
