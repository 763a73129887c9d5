#pragma once

// Run configuration for the command-line tool: every ModelConfig field plus
// I/O paths and a few run knobs, read from a plain `key = value` file ('#'
// starts a comment). Unknown keys are rejected. Command-line flags are
// applied after the file, so they win.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "msps/errors.hpp"
#include "msps/model.hpp"

namespace msps {

struct RunConfig {
  ModelConfig model;
  std::string pan, ms, ref, est, weights, out, data_dir;
  std::size_t size = 0;     // synthetic PAN side, 0: command default
  std::size_t steps = 300;  // fit steps
  double ratio = 4.0;       // ERGAS resolution ratio
  double peak = 1.0;        // PSNR / SSIM dynamic range
  bool verbose = false;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::uint64_t parse_u64(const std::string& key, std::string_view v) {
  std::uint64_t out = 0;
  int base = 10;
  if (v.size() > 2 && v[0] == '0' && (v[1] == 'x' || v[1] == 'X')) {
    v.remove_prefix(2);
    base = 16;
  }
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out, base);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ParameterError("config: '" + key + "' expects a non-negative integer, got '" +
                         std::string(v) + "'");
  return out;
}

inline double parse_real(const std::string& key, std::string_view v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(std::string(v), &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ParameterError("config: '" + key + "' expects a number, got '" + std::string(v) + "'");
}

inline bool parse_bool(const std::string& key, std::string_view v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ParameterError("config: '" + key + "' expects true/false, got '" + std::string(v) + "'");
}

}  // namespace detail

inline std::vector<std::string> config_keys() {
  return {"channels", "blocks",  "group_size", "max_clusters", "iterations", "alpha",
          "lsh.r",    "lsh.rounds", "lsh.radix", "lsh.seed",   "scale",      "expansion",
          "bands",    "seed",    "semantic_scan", "weight_prototypes", "pan", "ms",
          "ref",      "est",     "weights",   "out",          "data_dir",   "size",
          "steps",    "ratio",   "peak",      "verbose"};
}

inline void apply_setting(RunConfig& rc, const std::string& key, std::string_view value) {
  using namespace detail;
  ModelConfig& m = rc.model;
  auto sz = [&] { return static_cast<std::size_t>(parse_u64(key, value)); };
  if (key == "channels") m.channels = sz();
  else if (key == "blocks") m.blocks = sz();
  else if (key == "group_size") m.group_size = sz();
  else if (key == "max_clusters") m.max_clusters = sz();
  else if (key == "iterations") m.iterations = sz();
  else if (key == "alpha") m.alpha = parse_real(key, value);
  else if (key == "lsh.r") m.lsh.r = parse_real(key, value);
  else if (key == "lsh.rounds") m.lsh.rounds = sz();
  else if (key == "lsh.radix") m.lsh.radix = sz();
  else if (key == "lsh.seed") m.lsh.seed = parse_u64(key, value);
  else if (key == "scale") m.scale = sz();
  else if (key == "expansion") m.expansion = sz();
  else if (key == "bands") m.bands = sz();
  else if (key == "seed") m.seed = parse_u64(key, value);
  else if (key == "semantic_scan") m.semantic_scan = parse_bool(key, value);
  else if (key == "weight_prototypes") m.weight_prototypes = parse_bool(key, value);
  else if (key == "pan") rc.pan = value;
  else if (key == "ms") rc.ms = value;
  else if (key == "ref") rc.ref = value;
  else if (key == "est") rc.est = value;
  else if (key == "weights") rc.weights = value;
  else if (key == "out") rc.out = value;
  else if (key == "data_dir") rc.data_dir = value;
  else if (key == "size") rc.size = sz();
  else if (key == "steps") rc.steps = sz();
  else if (key == "ratio") rc.ratio = parse_real(key, value);
  else if (key == "peak") rc.peak = parse_real(key, value);
  else if (key == "verbose") rc.verbose = parse_bool(key, value);
  else throw ParameterError("config: unknown key '" + key + "'");
}

inline void apply_config_text(RunConfig& rc, std::string_view text, const std::string& origin = "config") {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ParameterError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    const std::string key(detail::trim(line.substr(0, eq)));
    try {
      apply_setting(rc, key, detail::trim(line.substr(eq + 1)));
    } catch (const ParameterError& e) {
      throw ParameterError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline void apply_config_file(RunConfig& rc, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  apply_config_text(rc, ss.str(), path);
}

// File first, then flag overrides in order.
inline RunConfig resolve_config(const std::string& path,
                                const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig rc;
  if (!path.empty()) apply_config_file(rc, path);
  for (const auto& [k, v] : overrides) apply_setting(rc, k, v);
  rc.model.validate();
  return rc;
}

}  // namespace msps
