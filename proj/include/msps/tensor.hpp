#pragma once

// Dense row-major tensor of doubles and the handful of primitives the rest
// of the library is built from. Spatial tensors are H x W x C, sequences are
// T x C with T = H * W in raster order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "msps/errors.hpp"
#include "msps/random.hpp"

namespace msps {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size())
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_str(shape_));
  }

  // 2-D literal: Tensor::matrix({{1, 2}, {3, 4}}).
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> d;
    d.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("ragged matrix literal");
      d.insert(d.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(d));
  }

  static Tensor vector(std::initializer_list<double> v) {
    return Tensor({v.size()}, std::vector<double>(v));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  const double& operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const double& at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  const double& at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  std::span<double> row(std::size_t i) {
    const std::size_t w = data_.size() / shape_[0];
    return std::span<double>(data_).subspan(i * w, w);
  }
  std::span<const double> row(std::size_t i) const {
    const std::size_t w = data_.size() / shape_[0];
    return std::span<const double>(data_).subspan(i * w, w);
  }

  Tensor reshaped(Shape s) const {
    if (shape_numel(s) != data_.size())
      throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
    return Tensor(std::move(s), data_);
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// construction helpers

inline Tensor random_uniform(Shape shape, SplitMix64& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (auto& v : t.storage()) v = rng.uniform(lo, hi);
  return t;
}

inline Tensor random_normal(Shape shape, SplitMix64& rng, double stddev = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.storage()) v = stddev * rng.normal();
  return t;
}

inline Tensor identity_matrix(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

// ---------------------------------------------------------------------------
// elementwise

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(what) + ": shape " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

template <typename F>
Tensor map(const Tensor& x, F&& f) {
  Tensor out(x.shape());
  std::transform(x.storage().begin(), x.storage().end(), out.storage().begin(), f);
  return out;
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, F&& f, const char* what = "zip") {
  require_same_shape(a, b, what);
  Tensor out(a.shape());
  std::transform(a.storage().begin(), a.storage().end(), b.storage().begin(),
                 out.storage().begin(), f);
  return out;
}

inline double sigmoid(double x) {
  // Branches keep exp() from overflowing for large |x|.
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& x) { return map(x, [](double v) { return sigmoid(v); }); }

inline Tensor silu(const Tensor& x) { return map(x, [](double v) { return v * sigmoid(v); }); }

inline Tensor squared_relu(const Tensor& x) {
  return map(x, [](double v) { return v > 0.0 ? v * v : 0.0; });
}

inline Tensor add(const Tensor& a, const Tensor& b) { return zip(a, b, std::plus<>(), "add"); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return zip(a, b, std::minus<>(), "sub"); }
inline Tensor mul(const Tensor& a, const Tensor& b) {
  return zip(a, b, std::multiplies<>(), "mul");
}
inline Tensor scale(const Tensor& a, double s) {
  return map(a, [s](double v) { return v * s; });
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double v : a.storage()) m = std::max(m, std::abs(v));
  return m;
}

// ||a - b||_inf / ||b||_inf (0 when both vanish).
inline double relative_error(const Tensor& a, const Tensor& b) {
  const double num = max_abs_diff(a, b);
  const double den = max_abs(b);
  if (den == 0.0) return num;
  return num / den;
}

// ---------------------------------------------------------------------------
// linear algebra / normalization

// x[T x Cin] * w[Cin x Cout] + bias.
inline Tensor linear_map(const Tensor& x, const Tensor& w, const Tensor* bias = nullptr) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0))
    throw DimensionError("linear_map: " + shape_str(x.shape()) + " * " + shape_str(w.shape()));
  const std::size_t rows = x.dim(0), in = x.dim(1), out = w.dim(1);
  if (bias && (bias->rank() != 1 || bias->dim(0) != out))
    throw DimensionError("linear_map: bias " + shape_str(bias->shape()));
  Tensor y({rows, out});
  for (std::size_t t = 0; t < rows; ++t) {
    auto yr = y.row(t);
    if (bias) std::copy(bias->storage().begin(), bias->storage().end(), yr.begin());
    for (std::size_t i = 0; i < in; ++i) {
      const double xv = x.at(t, i);
      if (xv == 0.0) continue;
      const double* wr = w.storage().data() + i * out;
      for (std::size_t o = 0; o < out; ++o) yr[o] += xv * wr[o];
    }
  }
  return y;
}

inline Tensor linear_map(const Tensor& x, const Tensor& w, const Tensor& bias) {
  return linear_map(x, w, &bias);
}

// Per-row standardization followed by the affine (gain, bias).
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() != 2 || x.dim(1) == 0) throw DimensionError("layer_norm: need T x C, C >= 1");
  const std::size_t c = x.dim(1);
  if (gain.size() != c || bias.size() != c) throw DimensionError("layer_norm: affine size");
  Tensor y(x.shape());
  for (std::size_t t = 0; t < x.dim(0); ++t) {
    auto xr = x.row(t);
    double mean = 0.0;
    for (double v : xr) mean += v;
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (double v : xr) var += (v - mean) * (v - mean);
    var /= static_cast<double>(c);
    const double denom = std::sqrt(var + eps);
    auto yr = y.row(t);
    for (std::size_t i = 0; i < c; ++i) {
      const double n = denom > 0.0 ? (xr[i] - mean) / denom : 0.0;
      yr[i] = n * gain[i] + bias[i];
    }
  }
  return y;
}

inline constexpr double kInstanceNormEps = 1e-5;

// Instance-normalizes the first C/2 channels over H x W, then applies the
// affine; the second half passes through untouched.
inline Tensor half_instance_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                                 double eps = kInstanceNormEps) {
  if (x.rank() != 3) throw DimensionError("half_instance_norm: need H x W x C");
  const std::size_t c = x.dim(2);
  if (c % 2 != 0) throw DimensionError("half_instance_norm: odd channel count " + std::to_string(c));
  const std::size_t half = c / 2;
  if (gain.size() != half || bias.size() != half)
    throw DimensionError("half_instance_norm: affine must have C/2 entries");
  const std::size_t n = x.dim(0) * x.dim(1);
  Tensor y = x;
  for (std::size_t ch = 0; ch < half; ++ch) {
    double mean = 0.0;
    for (std::size_t p = 0; p < n; ++p) mean += x[p * c + ch];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      const double d = x[p * c + ch] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double denom = std::sqrt(var + eps);
    for (std::size_t p = 0; p < n; ++p)
      y[p * c + ch] = (x[p * c + ch] - mean) / denom * gain[ch] + bias[ch];
  }
  return y;
}

inline Tensor half_instance_norm(const Tensor& x) {
  if (x.rank() != 3) throw DimensionError("half_instance_norm: need H x W x C");
  const std::size_t half = x.dim(2) / 2;
  return half_instance_norm(x, Tensor({half}, 1.0), Tensor({half}, 0.0));
}

// ---------------------------------------------------------------------------
// spatial ops (replicate padding throughout)

inline std::size_t clamp_index(std::ptrdiff_t i, std::size_t n) {
  if (i < 0) return 0;
  if (static_cast<std::size_t>(i) >= n) return n - 1;
  return static_cast<std::size_t>(i);
}

inline void require_hwc(const Tensor& x, const char* what) {
  if (x.rank() != 3 || x.dim(0) == 0 || x.dim(1) == 0)
    throw DimensionError(std::string(what) + ": need non-empty H x W x C, got " +
                         shape_str(x.shape()));
}

// out[y][x][c] = sum_{dy,dx} k[dy+1][dx+1][c] * in[y+dy][x+dx][c]
inline Tensor depthwise_conv3x3(const Tensor& x, const Tensor& kernels) {
  require_hwc(x, "depthwise_conv3x3");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (kernels.shape() != Shape{3, 3, c})
    throw DimensionError("depthwise_conv3x3: kernels must be 3x3x" + std::to_string(c));
  Tensor y(x.shape());
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      double* out = &y.at(i, j, 0);
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const std::size_t si = clamp_index(static_cast<std::ptrdiff_t>(i) + dy, h);
          const std::size_t sj = clamp_index(static_cast<std::ptrdiff_t>(j) + dx, w);
          const double* in = &x.at(si, sj, 0);
          const double* k = &kernels.at(dy + 1, dx + 1, 0);
          for (std::size_t ch = 0; ch < c; ++ch) out[ch] += k[ch] * in[ch];
        }
    }
  return y;
}

// Dense 3x3 convolution; weights are [3, 3, Cin, Cout].
inline Tensor conv3x3(const Tensor& x, const Tensor& weights, const Tensor& bias) {
  require_hwc(x, "conv3x3");
  const std::size_t h = x.dim(0), w = x.dim(1), cin = x.dim(2);
  if (weights.rank() != 4 || weights.dim(0) != 3 || weights.dim(1) != 3 || weights.dim(2) != cin)
    throw DimensionError("conv3x3: weights " + shape_str(weights.shape()) + " for input " +
                         shape_str(x.shape()));
  const std::size_t cout = weights.dim(3);
  if (bias.size() != cout) throw DimensionError("conv3x3: bias size");
  Tensor y({h, w, cout});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      double* out = &y.at(i, j, 0);
      std::copy(bias.storage().begin(), bias.storage().end(), out);
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const std::size_t si = clamp_index(static_cast<std::ptrdiff_t>(i) + dy, h);
          const std::size_t sj = clamp_index(static_cast<std::ptrdiff_t>(j) + dx, w);
          const double* in = &x.at(si, sj, 0);
          const double* k =
              weights.storage().data() + (static_cast<std::size_t>((dy + 1) * 3 + dx + 1) * cin) * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double v = in[ci];
            if (v == 0.0) continue;
            const double* kr = k + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) out[co] += v * kr[co];
          }
        }
    }
  return y;
}

// Translates channels [c0, c1) so that out[y][x] = in[y - dy][x - dx]
// (content moves by (dy, dx)), clamping reads to the border.
inline Tensor shift_channels(const Tensor& x, int dy, int dx, std::size_t c0, std::size_t c1) {
  require_hwc(x, "shift_channels");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (c0 > c1 || c1 > c) throw DimensionError("shift_channels: bad channel range");
  Tensor y = x;
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const std::size_t si = clamp_index(static_cast<std::ptrdiff_t>(i) - dy, h);
      const std::size_t sj = clamp_index(static_cast<std::ptrdiff_t>(j) - dx, w);
      for (std::size_t ch = c0; ch < c1; ++ch) y.at(i, j, ch) = x.at(si, sj, ch);
    }
  return y;
}

inline Tensor shift_spatial(const Tensor& x, int dy, int dx) {
  return shift_channels(x, dy, dx, 0, x.rank() == 3 ? x.dim(2) : 0);
}

// Bilinear resize with half-pixel centres (align_corners = false).
inline Tensor bilinear_upsample(const Tensor& x, std::size_t factor) {
  require_hwc(x, "bilinear_upsample");
  if (factor == 0) throw ParameterError("bilinear_upsample: factor must be >= 1");
  if (factor == 1) return x;
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const std::size_t oh = h * factor, ow = w * factor;
  const double inv = 1.0 / static_cast<double>(factor);
  auto source = [inv](std::size_t o, std::size_t n, std::size_t& i0, std::size_t& i1,
                      double& lam) {
    double s = (static_cast<double>(o) + 0.5) * inv - 0.5;
    if (s < 0.0) s = 0.0;
    i0 = std::min(static_cast<std::size_t>(s), n - 1);
    i1 = std::min(i0 + 1, n - 1);
    lam = s - static_cast<double>(i0);
  };
  Tensor y({oh, ow, c});
  for (std::size_t i = 0; i < oh; ++i) {
    std::size_t y0, y1;
    double ly;
    source(i, h, y0, y1, ly);
    for (std::size_t j = 0; j < ow; ++j) {
      std::size_t x0, x1;
      double lx;
      source(j, w, x0, x1, lx);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double top = x.at(y0, x0, ch) * (1.0 - lx) + x.at(y0, x1, ch) * lx;
        const double bot = x.at(y1, x0, ch) * (1.0 - lx) + x.at(y1, x1, ch) * lx;
        y.at(i, j, ch) = top * (1.0 - ly) + bot * ly;
      }
    }
  }
  return y;
}

// Box-filter downsampling (mean over factor x factor blocks).
inline Tensor box_downsample(const Tensor& x, std::size_t factor) {
  require_hwc(x, "box_downsample");
  if (factor == 0 || x.dim(0) % factor || x.dim(1) % factor)
    throw DimensionError("box_downsample: " + shape_str(x.shape()) + " not divisible by " +
                         std::to_string(factor));
  const std::size_t oh = x.dim(0) / factor, ow = x.dim(1) / factor, c = x.dim(2);
  Tensor y({oh, ow, c});
  const double norm = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j)
      for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (std::size_t a = 0; a < factor; ++a)
          for (std::size_t b = 0; b < factor; ++b) s += x.at(i * factor + a, j * factor + b, ch);
        y.at(i, j, ch) = s * norm;
      }
  return y;
}

// Pixel replication (the adjoint of box_downsample up to scale).
inline Tensor nearest_upsample(const Tensor& x, std::size_t factor) {
  require_hwc(x, "nearest_upsample");
  const std::size_t c = x.dim(2);
  Tensor y({x.dim(0) * factor, x.dim(1) * factor, c});
  for (std::size_t i = 0; i < y.dim(0); ++i)
    for (std::size_t j = 0; j < y.dim(1); ++j)
      for (std::size_t ch = 0; ch < c; ++ch) y.at(i, j, ch) = x.at(i / factor, j / factor, ch);
  return y;
}

// ---------------------------------------------------------------------------
// layout utilities

inline Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  if (a.rank() != b.rank() || axis >= a.rank())
    throw DimensionError("concat: rank mismatch or bad axis");
  for (std::size_t d = 0; d < a.rank(); ++d)
    if (d != axis && a.dim(d) != b.dim(d))
      throw DimensionError("concat: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Shape s = a.shape();
  s[axis] += b.dim(axis);
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= a.dim(d);
  for (std::size_t d = axis + 1; d < a.rank(); ++d) inner *= a.dim(d);
  const std::size_t na = a.dim(axis) * inner, nb = b.dim(axis) * inner;
  Tensor y(s);
  auto out = y.storage().begin();
  for (std::size_t o = 0; o < outer; ++o) {
    out = std::copy_n(a.storage().begin() + o * na, na, out);
    out = std::copy_n(b.storage().begin() + o * nb, nb, out);
  }
  return y;
}

// Splits along `axis` into pieces of the given sizes (which must sum to the
// axis length).
inline std::vector<Tensor> split(const Tensor& x, const std::vector<std::size_t>& sizes,
                                 std::size_t axis) {
  if (axis >= x.rank()) throw DimensionError("split: bad axis");
  if (std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}) != x.dim(axis))
    throw DimensionError("split: sizes do not sum to dim " + std::to_string(x.dim(axis)));
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= x.dim(d);
  for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
  const std::size_t stride = x.dim(axis) * inner;
  std::vector<Tensor> parts;
  std::size_t offset = 0;
  for (std::size_t n : sizes) {
    Shape s = x.shape();
    s[axis] = n;
    Tensor p(s);
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(x.storage().begin() + o * stride + offset * inner, n * inner,
                  p.storage().begin() + o * n * inner);
    parts.push_back(std::move(p));
    offset += n;
  }
  return parts;
}

// Rows [begin, end) of a rank>=1 tensor.
inline Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  if (begin > end || end > x.dim(0)) throw DimensionError("slice_rows: range");
  const std::size_t w = x.dim(0) ? x.size() / x.dim(0) : 0;
  Shape s = x.shape();
  s[0] = end - begin;
  return Tensor(s, std::vector<double>(x.storage().begin() + begin * w,
                                       x.storage().begin() + end * w));
}

// H x W x C -> (H*W) x C
inline Tensor flatten_hw(const Tensor& x) {
  require_hwc(x, "flatten_hw");
  return x.reshaped({x.dim(0) * x.dim(1), x.dim(2)});
}

inline Tensor unflatten_hw(const Tensor& x, std::size_t h, std::size_t w) {
  if (x.rank() != 2 || x.dim(0) != h * w)
    throw DimensionError("unflatten_hw: " + shape_str(x.shape()) + " is not (" +
                         std::to_string(h) + "*" + std::to_string(w) + ") x C");
  return x.reshaped({h, w, x.dim(1)});
}

// H x W x C -> W x H x C
inline Tensor transpose_hw(const Tensor& x) {
  require_hwc(x, "transpose_hw");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  Tensor y({w, h, c});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      std::copy_n(&x.at(i, j, 0), c, &y.at(j, i, 0));
  return y;
}

}  // namespace msps
