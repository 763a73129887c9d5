#pragma once

// Image files.
//
// PAN: binary PGM (P5), maxval 65535, big-endian 16-bit samples; sample s
//      maps to the real s / 65535 (writes clamp to [0, 1] and round).
//      8-bit P5 files (maxval < 256) are accepted on read.
// MS / HRMS: "MSB1", u32 H, u32 W, u32 B, then H*W*B little-endian f64 in
//      H x W x B row-major order.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "msps/errors.hpp"
#include "msps/tensor.hpp"
#include "msps/weights_io.hpp"

namespace msps {

inline void write_pgm16(const std::string& path, const Tensor& img) {
  if (img.rank() != 3 || img.dim(2) != 1) throw DimensionError("write_pgm16: need H x W x 1");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << "P5\n" << img.dim(1) << ' ' << img.dim(0) << "\n65535\n";
  for (double v : img.storage()) {
    const double c = std::clamp(v, 0.0, 1.0);
    const auto s = static_cast<std::uint16_t>(std::lround(c * 65535.0));
    const char bytes[2] = {static_cast<char>(s >> 8), static_cast<char>(s & 0xFF)};
    os.write(bytes, 2);
  }
  if (!os) throw IoError("write failed for '" + path + "'");
}

namespace detail {

inline std::size_t pgm_token(std::istream& is) {
  std::string tok;
  while (is >> tok) {
    if (tok[0] == '#') {
      std::string rest;
      std::getline(is, rest);
      continue;
    }
    return static_cast<std::size_t>(std::stoul(tok));
  }
  throw IoError("truncated PGM header");
}

}  // namespace detail

inline Tensor read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  char magic[2];
  if (!is.read(magic, 2) || magic[0] != 'P' || magic[1] != '5')
    throw IoError("'" + path + "' is not a binary PGM (P5)");
  const std::size_t w = detail::pgm_token(is), h = detail::pgm_token(is);
  const std::size_t maxval = detail::pgm_token(is);
  if (maxval == 0 || maxval > 65535) throw IoError("PGM maxval out of range");
  is.get();  // single whitespace before the raster
  Tensor img({h, w, 1});
  const bool wide = maxval > 255;
  for (double& v : img.storage()) {
    unsigned s;
    if (wide) {
      unsigned char b[2];
      if (!is.read(reinterpret_cast<char*>(b), 2)) throw IoError("truncated PGM raster");
      s = (static_cast<unsigned>(b[0]) << 8) | b[1];
    } else {
      unsigned char b;
      if (!is.read(reinterpret_cast<char*>(&b), 1)) throw IoError("truncated PGM raster");
      s = b;
    }
    v = static_cast<double>(s) / static_cast<double>(maxval);
  }
  return img;
}

inline constexpr char kMsbMagic[4] = {'M', 'S', 'B', '1'};

inline void write_msb(const std::string& path, const Tensor& img) {
  if (img.rank() != 3) throw DimensionError("write_msb: need H x W x B");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.write(kMsbMagic, 4);
  for (std::size_t d = 0; d < 3; ++d) le::put<std::uint32_t>(os, static_cast<std::uint32_t>(img.dim(d)));
  os.write(reinterpret_cast<const char*>(img.storage().data()),
           static_cast<std::streamsize>(img.size() * sizeof(double)));
  if (!os) throw IoError("write failed for '" + path + "'");
}

inline Tensor read_msb(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMsbMagic, 4) != 0)
    throw IoError("'" + path + "' is not an MSB1 image");
  const auto h = le::get<std::uint32_t>(is);
  const auto w = le::get<std::uint32_t>(is);
  const auto b = le::get<std::uint32_t>(is);
  Tensor img({h, w, b});
  if (!is.read(reinterpret_cast<char*>(img.storage().data()),
               static_cast<std::streamsize>(img.size() * sizeof(double))))
    throw IoError("truncated MSB1 raster in '" + path + "'");
  return img;
}

// Dispatches on the file's magic bytes.
inline Tensor read_image(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  char magic[4] = {};
  is.read(magic, 4);
  if (magic[0] == 'P' && magic[1] == '5') return read_pgm(path);
  if (std::memcmp(magic, kMsbMagic, 4) == 0) return read_msb(path);
  throw IoError("'" + path + "': unrecognized image format");
}

}  // namespace msps
