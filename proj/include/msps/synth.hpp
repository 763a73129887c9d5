#pragma once

// Synthetic pan-sharpening triplets: a high-resolution multispectral ground
// truth made of smooth Gaussian blobs plus sharp-edged rectangles, the PAN
// image as its band mean, and the MS image as its box-downsampled version.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "msps/errors.hpp"
#include "msps/random.hpp"
#include "msps/tensor.hpp"

namespace msps {

struct SyntheticPair {
  Tensor gt;   // H x W x B
  Tensor pan;  // H x W x 1
  Tensor ms;   // H/scale x W/scale x B
};

inline Tensor band_mean(const Tensor& img) {
  require_hwc(img, "band_mean");
  const std::size_t nb = img.dim(2);
  Tensor out({img.dim(0), img.dim(1), 1});
  for (std::size_t p = 0; p < out.size(); ++p) {
    double s = 0.0;
    for (std::size_t b = 0; b < nb; ++b) s += img[p * nb + b];
    out[p] = s / static_cast<double>(nb);
  }
  return out;
}

inline SyntheticPair synthesize(std::uint64_t seed, std::size_t size, std::size_t bands,
                                std::size_t scale) {
  if (size == 0 || bands == 0 || scale == 0 || size % scale != 0)
    throw DimensionError("synth: size " + std::to_string(size) + " must be a positive multiple of scale " +
                         std::to_string(scale));
  SplitMix64 rng(seed);
  const double n = static_cast<double>(size);

  // Shared structure: blobs + rectangles with hard edges.
  Tensor structure({size, size, 1});
  const int blobs = 3 + static_cast<int>(rng.next_u64() % 3);
  for (int k = 0; k < blobs; ++k) {
    const double cy = rng.uniform(0, n), cx = rng.uniform(0, n);
    const double sig = rng.uniform(0.08, 0.25) * n, amp = rng.uniform(0.2, 0.5);
    for (std::size_t i = 0; i < size; ++i)
      for (std::size_t j = 0; j < size; ++j) {
        const double dy = static_cast<double>(i) - cy, dx = static_cast<double>(j) - cx;
        structure.at(i, j, 0) += amp * std::exp(-(dy * dy + dx * dx) / (2 * sig * sig));
      }
  }
  const int rects = 2 + static_cast<int>(rng.next_u64() % 2);
  for (int k = 0; k < rects; ++k) {
    const auto y0 = static_cast<std::size_t>(rng.uniform(0, n * 0.7));
    const auto x0 = static_cast<std::size_t>(rng.uniform(0, n * 0.7));
    const auto hh = static_cast<std::size_t>(rng.uniform(0.15, 0.4) * n) + 1;
    const auto ww = static_cast<std::size_t>(rng.uniform(0.15, 0.4) * n) + 1;
    const double amp = rng.uniform(-0.3, 0.3);
    for (std::size_t i = y0; i < std::min(size, y0 + hh); ++i)
      for (std::size_t j = x0; j < std::min(size, x0 + ww); ++j) structure.at(i, j, 0) += amp;
  }

  SyntheticPair out;
  out.gt = Tensor({size, size, bands});
  for (std::size_t b = 0; b < bands; ++b) {
    const double base = rng.uniform(0.15, 0.35), gain = rng.uniform(0.6, 1.0);
    // a gentle band-specific tilt keeps the spectra distinct
    const double ty = rng.uniform(-0.1, 0.1), tx = rng.uniform(-0.1, 0.1);
    for (std::size_t i = 0; i < size; ++i)
      for (std::size_t j = 0; j < size; ++j) {
        const double v = base + gain * structure.at(i, j, 0) + ty * static_cast<double>(i) / n +
                         tx * static_cast<double>(j) / n;
        out.gt.at(i, j, b) = std::clamp(v, 0.0, 1.0);
      }
  }
  out.pan = band_mean(out.gt);
  out.ms = box_downsample(out.gt, scale);
  return out;
}

}  // namespace msps
