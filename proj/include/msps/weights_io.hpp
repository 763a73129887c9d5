#pragma once

// Weight container, little-endian throughout:
//
//   "MSPS"                  4 bytes
//   version                 u32 (= 1)
//   array count             u32
//   per array:
//     name length           u32
//     name                  UTF-8 bytes, no terminator
//     rank                  u32
//     dims                  rank x u64
//     data                  prod(dims) x f64
//
// The model configuration travels as arrays named "config.<key>" (one f64
// each; the 64-bit LSH seed and model seed are split into "_lo"/"_hi"
// 32-bit halves so they survive the f64 round trip).

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "msps/errors.hpp"
#include "msps/model.hpp"
#include "msps/tensor.hpp"

namespace msps {

inline constexpr char kWeightsMagic[4] = {'M', 'S', 'P', 'S'};
inline constexpr std::uint32_t kWeightsVersion = 1;

namespace le {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError("unexpected end of file");
  return v;
}

}  // namespace le

using NamedArrays = std::vector<std::pair<std::string, Tensor>>;

inline void write_named_arrays(std::ostream& os, const NamedArrays& arrays) {
  os.write(kWeightsMagic, 4);
  le::put<std::uint32_t>(os, kWeightsVersion);
  le::put<std::uint32_t>(os, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& [name, t] : arrays) {
    le::put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    le::put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) le::put<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(t.storage().data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
}

inline NamedArrays read_named_arrays(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kWeightsMagic, 4) != 0)
    throw IoError("not an MSPS weight file (bad magic)");
  const auto version = le::get<std::uint32_t>(is);
  if (version != kWeightsVersion)
    throw IoError("unsupported MSPS version " + std::to_string(version));
  const auto count = le::get<std::uint32_t>(is);
  NamedArrays out;
  for (std::uint32_t a = 0; a < count; ++a) {
    const auto len = le::get<std::uint32_t>(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw IoError("truncated array name");
    const auto rank = le::get<std::uint32_t>(is);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(le::get<std::uint64_t>(is));
    Tensor t(shape);
    if (!is.read(reinterpret_cast<char*>(t.storage().data()),
                 static_cast<std::streamsize>(t.size() * sizeof(double))))
      throw IoError("truncated data for array '" + name + "'");
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

namespace detail {

inline Tensor scalar(double v) { return Tensor({1}, v); }

inline void put_u64(NamedArrays& a, const std::string& key, std::uint64_t v) {
  a.emplace_back(key + "_lo", scalar(static_cast<double>(v & 0xFFFFFFFFULL)));
  a.emplace_back(key + "_hi", scalar(static_cast<double>(v >> 32)));
}

}  // namespace detail

inline NamedArrays config_arrays(const ModelConfig& c) {
  NamedArrays a;
  auto put = [&a](const std::string& k, double v) { a.emplace_back("config." + k, detail::scalar(v)); };
  put("channels", static_cast<double>(c.channels));
  put("blocks", static_cast<double>(c.blocks));
  put("group_size", static_cast<double>(c.group_size));
  put("max_clusters", static_cast<double>(c.max_clusters));
  put("iterations", static_cast<double>(c.iterations));
  put("alpha", c.alpha);
  put("lsh.r", c.lsh.r);
  put("lsh.rounds", static_cast<double>(c.lsh.rounds));
  put("lsh.radix", static_cast<double>(c.lsh.radix));
  detail::put_u64(a, "config.lsh.seed", c.lsh.seed);
  put("scale", static_cast<double>(c.scale));
  put("expansion", static_cast<double>(c.expansion));
  put("bands", static_cast<double>(c.bands));
  detail::put_u64(a, "config.seed", c.seed);
  put("semantic_scan", c.semantic_scan ? 1.0 : 0.0);
  put("weight_prototypes", c.weight_prototypes ? 1.0 : 0.0);
  return a;
}

inline ModelConfig config_from_arrays(const std::map<std::string, const Tensor*>& by_name) {
  auto get = [&by_name](const std::string& k) {
    auto it = by_name.find("config." + k);
    if (it == by_name.end() || it->second->size() != 1)
      throw IoError("weight file missing config entry '" + k + "'");
    return (*it->second)[0];
  };
  auto get_u64 = [&get](const std::string& k) {
    return static_cast<std::uint64_t>(get(k + "_lo")) |
           (static_cast<std::uint64_t>(get(k + "_hi")) << 32);
  };
  auto get_size = [&get](const std::string& k) { return static_cast<std::size_t>(get(k)); };
  ModelConfig c;
  c.channels = get_size("channels");
  c.blocks = get_size("blocks");
  c.group_size = get_size("group_size");
  c.max_clusters = get_size("max_clusters");
  c.iterations = get_size("iterations");
  c.alpha = get("alpha");
  c.lsh.r = get("lsh.r");
  c.lsh.rounds = get_size("lsh.rounds");
  c.lsh.radix = get_size("lsh.radix");
  c.lsh.seed = get_u64("lsh.seed");
  c.scale = get_size("scale");
  c.expansion = get_size("expansion");
  c.bands = get_size("bands");
  c.seed = get_u64("seed");
  c.semantic_scan = get("semantic_scan") != 0.0;
  c.weight_prototypes = get("weight_prototypes") != 0.0;
  return c;
}

inline void save_weights(const std::string& path, const ModelWeights& w, const ModelConfig& cfg) {
  NamedArrays arrays = config_arrays(cfg);
  visit_parameters(w, [&arrays](const std::string& name, const Tensor& t) {
    arrays.emplace_back(name, t);
  });
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  write_named_arrays(os, arrays);
  if (!os) throw IoError("write failed for '" + path + "'");
}

struct LoadedModel {
  ModelConfig config;
  ModelWeights weights;
};

inline LoadedModel load_weights(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  const NamedArrays arrays = read_named_arrays(is);
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : arrays) by_name[name] = &t;
  LoadedModel m{config_from_arrays(by_name), {}};
  m.weights = parameter_init(m.config, 0);
  visit_parameters(m.weights, [&by_name](const std::string& name, Tensor& t) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw IoError("weight file missing array '" + name + "'");
    if (it->second->shape() != t.shape())
      throw IoError("array '" + name + "' has shape " + shape_str(it->second->shape()) +
                    ", expected " + shape_str(t.shape()));
    t = *it->second;
  });
  return m;
}

}  // namespace msps
