#pragma once

// Full-reference fusion quality metrics on H x W x B images.
//
//   PSNR  = 10 log10(peak^2 / MSE)                      (+inf when MSE = 0)
//   SSIM  = mean over channels of the mean local SSIM; 11x11 Gaussian window
//           (sigma 1.5, normalized), valid positions only, C1 = (0.01 peak)^2,
//           C2 = (0.03 peak)^2. Images smaller than 11 px use the largest odd
//           window that fits.
//   SAM   = mean over pixels (both spectra non-zero) of
//           acos(clamp(<r, e> / (|r| |e|), -1, 1)), radians
//   ERGAS = 100 / ratio * sqrt(mean_b RMSE_b^2 / mu_b^2), mu_b the reference
//           band mean; bands with mu_b = 0 are skipped with a warning

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "msps/errors.hpp"
#include "msps/tensor.hpp"

namespace msps {

namespace detail {

inline void check_metric_pair(const Tensor& ref, const Tensor& est, const char* what) {
  if (ref.rank() != 3) throw DimensionError(std::string(what) + ": need H x W x B images");
  require_same_shape(ref, est, what);
  if (ref.empty()) throw DimensionError(std::string(what) + ": empty image");
}

}  // namespace detail

inline double psnr(const Tensor& ref, const Tensor& est, double peak) {
  detail::check_metric_pair(ref, est, "psnr");
  if (!(peak > 0.0)) throw ParameterError("psnr: peak must be > 0");
  double mse = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double d = ref[i] - est[i];
    mse += d * d;
  }
  mse /= static_cast<double>(ref.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

inline double ssim(const Tensor& ref, const Tensor& est, double peak = 1.0) {
  detail::check_metric_pair(ref, est, "ssim");
  const std::size_t h = ref.dim(0), w = ref.dim(1), nb = ref.dim(2);
  std::size_t win = std::min({kSsimWindow, h, w});
  if (win % 2 == 0) --win;
  const int rad = static_cast<int>(win / 2);
  std::vector<double> g(win);
  double gs = 0.0;
  for (int i = -rad; i <= rad; ++i) {
    g[static_cast<std::size_t>(i + rad)] = std::exp(-(i * i) / (2.0 * kSsimSigma * kSsimSigma));
    gs += g[static_cast<std::size_t>(i + rad)];
  }
  for (double& v : g) v /= gs;
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);

  double total = 0.0;
  for (std::size_t b = 0; b < nb; ++b) {
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t i = static_cast<std::size_t>(rad); i + static_cast<std::size_t>(rad) < h; ++i)
      for (std::size_t j = static_cast<std::size_t>(rad); j + static_cast<std::size_t>(rad) < w; ++j) {
        double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
        for (std::size_t a = 0; a < win; ++a)
          for (std::size_t c = 0; c < win; ++c) {
            const double wt = g[a] * g[c];
            const double x = ref.at(i + a - rad, j + c - rad, b);
            const double y = est.at(i + a - rad, j + c - rad, b);
            mx += wt * x;
            my += wt * y;
            xx += wt * x * x;
            yy += wt * y * y;
            xy += wt * x * y;
          }
        const double vx = xx - mx * mx, vy = yy - my * my, cxy = xy - mx * my;
        acc += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
    total += acc / static_cast<double>(count);
  }
  return total / static_cast<double>(nb);
}

inline double sam(const Tensor& ref, const Tensor& est) {
  detail::check_metric_pair(ref, est, "sam");
  const std::size_t nb = ref.dim(2), pixels = ref.dim(0) * ref.dim(1);
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < pixels; ++p) {
    double dot = 0, nr = 0, ne = 0, cross = 0;
    for (std::size_t b = 0; b < nb; ++b) {
      const double r = ref[p * nb + b], e = est[p * nb + b];
      dot += r * e;
      nr += r * r;
      ne += e * e;
      // Lagrange identity: |r x e|^2 = sum over pairs, exact zero for parallel spectra
      for (std::size_t c = b + 1; c < nb; ++c) {
        const double m = r * est[p * nb + c] - ref[p * nb + c] * e;
        cross += m * m;
      }
    }
    if (nr == 0.0 || ne == 0.0) continue;
    acc += std::atan2(std::sqrt(cross), dot);
    ++count;
  }
  return count ? acc / static_cast<double>(count) : 0.0;
}

inline double ergas(const Tensor& ref, const Tensor& est, double ratio,
                    std::vector<std::string>* warnings = nullptr) {
  detail::check_metric_pair(ref, est, "ergas");
  if (!(ratio > 0.0)) throw ParameterError("ergas: ratio must be > 0");
  const std::size_t nb = ref.dim(2), pixels = ref.dim(0) * ref.dim(1);
  double acc = 0.0;
  std::size_t used = 0;
  for (std::size_t b = 0; b < nb; ++b) {
    double mse = 0.0, mean = 0.0;
    for (std::size_t p = 0; p < pixels; ++p) {
      const double r = ref[p * nb + b], d = r - est[p * nb + b];
      mse += d * d;
      mean += r;
    }
    mse /= static_cast<double>(pixels);
    mean /= static_cast<double>(pixels);
    if (mean == 0.0) {
      if (warnings) warnings->push_back("ergas: band " + std::to_string(b) + " has zero mean, skipped");
      continue;
    }
    acc += mse / (mean * mean);
    ++used;
  }
  if (used == 0) return 0.0;
  return 100.0 / ratio * std::sqrt(acc / static_cast<double>(used));
}

struct MetricReport {
  double psnr = 0.0;  // dB, +inf when the images are identical
  double ssim = 0.0;
  double sam = 0.0;   // radians
  double ergas = 0.0;
  std::vector<std::string> warnings;

  bool psnr_infinite() const { return std::isinf(psnr); }

  std::string record() const {
    std::ostringstream os;
    os << std::setprecision(10);
    os << "psnr=" << (psnr_infinite() ? std::string("inf") : fmt(psnr)) << " ssim=" << fmt(ssim)
       << " sam=" << fmt(sam) << " ergas=" << fmt(ergas);
    return os.str();
  }

  std::string table() const {
    std::ostringstream os;
    os << std::left << std::setw(8) << "metric" << "value\n";
    os << std::setw(8) << "PSNR" << (psnr_infinite() ? std::string("inf") : fmt(psnr)) << " dB\n";
    os << std::setw(8) << "SSIM" << fmt(ssim) << '\n';
    os << std::setw(8) << "SAM" << fmt(sam) << " rad\n";
    os << std::setw(8) << "ERGAS" << fmt(ergas) << '\n';
    return os.str();
  }

 private:
  static std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
  }
};

inline MetricReport evaluate(const Tensor& ref, const Tensor& est, double peak, double ratio) {
  MetricReport r;
  r.psnr = psnr(ref, est, peak);
  r.ssim = ssim(ref, est, peak);
  r.sam = sam(ref, est);
  r.ergas = ergas(ref, est, ratio, &r.warnings);
  return r;
}

}  // namespace msps
