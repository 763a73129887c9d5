// msps: synthetic data, fusion, evaluation, self-check and a toy fit.
//
// Exit codes: 0 ok, 2 usage or bad input, 3 I/O, 4 invariant failure.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "msps/errors.hpp"
#include "msps/fit.hpp"
#include "msps/image_io.hpp"
#include "msps/metrics.hpp"
#include "msps/model.hpp"
#include "msps/run_config.hpp"
#include "msps/selfcheck.hpp"
#include "msps/synth.hpp"
#include "msps/weights_io.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitInvariant = 4;

// Flags shared by every subcommand. Each one maps onto a config key and is
// applied after the config file.
struct SharedFlags {
  std::string config;
  std::vector<std::pair<std::string, CLI::Option*>> keyed;
  bool verbose = false;
};

// Raw flag text, parsed later by the config layer.
struct Holder {
  std::string seed, out, scale, size, bands, steps, pan, ms, ref, est, weights, ratio, peak;
};

void add_keyed(CLI::App* sub, SharedFlags& sf, const std::string& key,
               const std::string& flag, std::string& slot, const std::string& help) {
  sf.keyed.emplace_back(key, sub->add_option(flag, slot, help));
}

void add_shared(CLI::App* sub, SharedFlags& sf, Holder& h) {
  sub->add_option("--config", sf.config, "key = value config file");
  add_keyed(sub, sf, "seed", "--seed", h.seed, "RNG seed (u64)");
  add_keyed(sub, sf, "out", "--out", h.out, "output path");
  add_keyed(sub, sf, "scale", "--scale", h.scale, "MS to PAN resolution ratio");
  sub->add_flag("--verbose,-v", sf.verbose, "extra diagnostics");
}

msps::RunConfig resolve(SharedFlags& sf) {
  std::vector<std::pair<std::string, std::string>> overrides;
  for (const auto& [key, opt] : sf.keyed) {
    if (opt->count() == 0) continue;
    overrides.emplace_back(key, opt->as<std::string>());
  }
  msps::RunConfig rc = msps::resolve_config(sf.config, overrides);
  if (sf.verbose) rc.verbose = true;
  return rc;
}

void require_path(const std::string& path, const char* what) {
  if (path.empty()) throw msps::ParameterError(std::string("missing ") + what);
}

std::filesystem::path output_dir(const std::string& out) {
  std::filesystem::path dir = out.empty() ? std::filesystem::path(".") : std::filesystem::path(out);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw msps::IoError("cannot create directory '" + dir.string() + "': " + ec.message());
  return dir;
}

int cmd_synth(const msps::RunConfig& rc) {
  const std::size_t size = rc.size ? rc.size : 32;
  const msps::SyntheticPair pair = msps::synthesize(rc.model.seed, size, rc.model.bands, rc.model.scale);
  const auto dir = output_dir(rc.out);
  msps::write_msb((dir / "gt.msb").string(), pair.gt);
  msps::write_msb((dir / "ms.msb").string(), pair.ms);
  msps::write_pgm16((dir / "pan.pgm").string(), pair.pan);
  std::cout << "wrote " << (dir / "gt.msb").string() << ", " << (dir / "ms.msb").string() << ", "
            << (dir / "pan.pgm").string() << " (" << size << "x" << size << "x" << rc.model.bands
            << ", scale " << rc.model.scale << ")\n";
  return kExitOk;
}

int cmd_fuse(const msps::RunConfig& rc) {
  require_path(rc.pan, "--pan");
  require_path(rc.ms, "--ms");
  require_path(rc.out, "--out");
  const msps::Tensor pan = msps::read_image(rc.pan);
  const msps::Tensor ms = msps::read_image(rc.ms);
  msps::ModelConfig cfg = rc.model;
  msps::ModelWeights w;
  if (!rc.weights.empty()) {
    msps::LoadedModel m = msps::load_weights(rc.weights);
    cfg = m.config;
    w = std::move(m.weights);
  } else {
    cfg.bands = ms.rank() == 3 ? ms.dim(2) : cfg.bands;
    w = msps::parameter_init(cfg, cfg.seed);
  }
  msps::ForwardTrace trace;
  const msps::Tensor fused = msps::forward(pan, ms, w, cfg, &trace);
  msps::write_msb(rc.out, fused);
  std::cout << "wrote " << rc.out << " (" << fused.dim(0) << "x" << fused.dim(1) << "x" << fused.dim(2)
            << ")\n";
  if (rc.verbose)
    std::cout << "wkv: fresh=" << trace.stats.fresh_evaluations << " shares=" << trace.stats.shares
              << " moments=" << trace.stats.moment_combines << " kernel_calls=" << trace.stats.kernel_calls
              << '\n';
  if (!rc.ref.empty()) {
    const msps::MetricReport r = msps::evaluate(msps::read_image(rc.ref), fused, rc.peak, rc.ratio);
    std::cout << r.table();
    for (const auto& wmsg : r.warnings) std::cerr << "warning: " << wmsg << '\n';
  }
  return kExitOk;
}

int cmd_eval(const msps::RunConfig& rc) {
  require_path(rc.ref, "--ref");
  require_path(rc.est, "--est");
  const msps::MetricReport r =
      msps::evaluate(msps::read_image(rc.ref), msps::read_image(rc.est), rc.peak, rc.ratio);
  std::cout << r.table();
  if (rc.verbose) std::cout << r.record() << '\n';
  for (const auto& wmsg : r.warnings) std::cerr << "warning: " << wmsg << '\n';
  if (!rc.out.empty()) {
    std::ofstream os(rc.out);
    if (!os) throw msps::IoError("cannot open '" + rc.out + "' for writing");
    os << r.record() << '\n';
  }
  return kExitOk;
}

int cmd_selfcheck(const msps::RunConfig& rc, bool fault, bool quick) {
  msps::SelfcheckOptions opt;
  opt.seed = rc.model.seed;
  opt.flip_decay_sign = fault;
  opt.include_fit = !quick;
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = msps::run_selfcheck(opt);
  std::size_t failed = 0;
  for (const auto& r : results) {
    std::cout << r.line() << '\n';
    if (!r.passed) ++failed;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << results.size() - failed << "/" << results.size() << " checks passed in " << secs << " s\n";
  if (failed) {
    std::cerr << "failing checks:\n";
    for (const auto& r : results)
      if (!r.passed) std::cerr << "  " << r.module << "/" << r.name << '\n';
    return kExitInvariant;
  }
  return kExitOk;
}

int cmd_fit(const msps::RunConfig& rc, const std::string& save_path) {
  msps::ModelConfig cfg = rc.model;
  msps::Tensor pan, ms, gt;
  if (!rc.pan.empty() || !rc.ms.empty() || !rc.ref.empty()) {
    require_path(rc.pan, "--pan");
    require_path(rc.ms, "--ms");
    require_path(rc.ref, "--ref");
    pan = msps::read_image(rc.pan);
    ms = msps::read_image(rc.ms);
    gt = msps::read_image(rc.ref);
    cfg.bands = ms.rank() == 3 ? ms.dim(2) : cfg.bands;
  } else {
    const msps::SyntheticPair pair = msps::synthesize(cfg.seed, rc.size ? rc.size : 16, cfg.bands, cfg.scale);
    pan = pair.pan;
    ms = pair.ms;
    gt = pair.gt;
  }
  msps::FitOptions opt;
  opt.steps = rc.steps;
  opt.seed = msps::derive_seed(cfg.seed, 1);
  const auto t0 = std::chrono::steady_clock::now();
  const msps::FitResult res = msps::fit_zeroth_order(pan, ms, gt, msps::parameter_init(cfg, cfg.seed), cfg, opt);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!rc.out.empty()) {
    std::ofstream os(rc.out);
    if (!os) throw msps::IoError("cannot open '" + rc.out + "' for writing");
    for (std::size_t i = 0; i < res.trace.size(); ++i) os << i << ' ' << res.trace[i] << '\n';
  }
  if (rc.verbose)
    for (std::size_t i = 0; i < res.trace.size(); i += 25) std::cout << "step " << i << " loss " << res.trace[i] << '\n';
  const double ratio = res.trace.back() / res.trace.front();
  std::cout << "initial loss " << res.trace.front() << "\nfinal loss " << res.trace.back() << "\nratio "
            << ratio << "\nsteps " << opt.steps << " in " << secs << " s\n";
  if (!save_path.empty()) msps::save_weights(save_path, res.weights, cfg);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"msps: pan-sharpening toolkit"};
  app.require_subcommand(1);

  SharedFlags sf;
  Holder h;

  auto* synth = app.add_subcommand("synth", "write a synthetic GT / MS / PAN triple");
  add_shared(synth, sf, h);
  add_keyed(synth, sf, "size", "--size", h.size, "PAN side length (default 32)");
  add_keyed(synth, sf, "bands", "--bands", h.bands, "MS band count");

  auto* fuse = app.add_subcommand("fuse", "fuse a PAN / MS pair");
  add_shared(fuse, sf, h);
  add_keyed(fuse, sf, "pan", "--pan", h.pan, "PAN image (PGM or MSB1)");
  add_keyed(fuse, sf, "ms", "--ms", h.ms, "MS image (MSB1)");
  add_keyed(fuse, sf, "weights", "--weights", h.weights, "weight file (default: seeded init)");
  add_keyed(fuse, sf, "ref", "--ref", h.ref, "reference HRMS for metrics");
  add_keyed(fuse, sf, "ratio", "--ratio", h.ratio, "ERGAS resolution ratio");
  add_keyed(fuse, sf, "peak", "--peak", h.peak, "PSNR / SSIM peak value");

  auto* eval = app.add_subcommand("eval", "score an estimate against a reference");
  add_shared(eval, sf, h);
  add_keyed(eval, sf, "ref", "--ref", h.ref, "reference image");
  add_keyed(eval, sf, "est", "--est", h.est, "estimated image");
  add_keyed(eval, sf, "ratio", "--ratio", h.ratio, "ERGAS resolution ratio");
  add_keyed(eval, sf, "peak", "--peak", h.peak, "PSNR / SSIM peak value");

  auto* check = app.add_subcommand("selfcheck", "run every invariant check");
  add_shared(check, sf, h);
  bool fault = false, quick = false;
  check->add_flag("--flip-decay-sign", fault, "fault injection: negate the wkv decay multiplier");
  check->add_flag("--quick", quick, "skip the toy fit");

  auto* fit = app.add_subcommand("fit", "zeroth-order toy fit of the decoder");
  add_shared(fit, sf, h);
  add_keyed(fit, sf, "size", "--size", h.size, "synthetic PAN side length (default 16)");
  add_keyed(fit, sf, "steps", "--steps", h.steps, "optimizer steps");
  add_keyed(fit, sf, "pan", "--pan", h.pan, "PAN image instead of synthetic data");
  add_keyed(fit, sf, "ms", "--ms", h.ms, "MS image");
  add_keyed(fit, sf, "ref", "--ref", h.ref, "ground-truth HRMS");
  std::string save_path;
  fit->add_option("--save-weights", save_path, "write the fitted weights here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const msps::RunConfig rc = resolve(sf);
    if (synth->parsed()) return cmd_synth(rc);
    if (fuse->parsed()) return cmd_fuse(rc);
    if (eval->parsed()) return cmd_eval(rc);
    if (check->parsed()) return cmd_selfcheck(rc, fault, quick);
    if (fit->parsed()) return cmd_fit(rc, save_path);
  } catch (const msps::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return EXIT_FAILURE;
  }
  return kExitUsage;
}
