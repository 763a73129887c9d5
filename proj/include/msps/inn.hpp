#pragma once

// Invertible multi-scale Q-shift: additive coupling over four channel
// quarters with scaled directional shifts as the coupling functions.
//
//   Y1 = X1 + F1(X2)    Z2 = G1(Y1) + X2
//   Y2 = Z2 + F2(X3)    Z3 = G2(Y2) + X3
//   Y3 = Z3 + F3(X4)    Z4 = G3(Y3) + X4
//   out = [Y1, Y2, Y3, Z4]
//
// Inversion subtracts the same terms in reverse order, so it is exact no
// matter what the shift does at the border.

#include <array>
#include <cstddef>
#include <utility>

#include "msps/errors.hpp"
#include "msps/random.hpp"
#include "msps/tensor.hpp"

namespace msps {

enum class Direction { right, left, down, up, down_right, up_left, down_left, up_right };

// (dy, dx) the content moves by.
constexpr std::pair<int, int> direction_offset(Direction d) {
  switch (d) {
    case Direction::right: return {0, 1};
    case Direction::left: return {0, -1};
    case Direction::down: return {1, 0};
    case Direction::up: return {-1, 0};
    case Direction::down_right: return {1, 1};
    case Direction::up_left: return {-1, -1};
    case Direction::down_left: return {1, -1};
    case Direction::up_right: return {-1, 1};
  }
  return {0, 0};
}

struct ShiftOperator {
  Direction direction = Direction::right;
  std::size_t distance = 1;
  Tensor scale;  // [k], per channel

  Tensor apply(const Tensor& x) const {
    if (scale.size() != x.dim(2)) throw DimensionError("shift operator: scale/channel mismatch");
    const auto [dy, dx] = direction_offset(direction);
    const int s = static_cast<int>(distance);
    Tensor y = shift_spatial(x, dy * s, dx * s);
    const std::size_t c = x.dim(2);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= scale[i % c];
    return y;
  }

  // One-hot 3x3 depthwise kernel times the scale (distance 1 only).
  Tensor as_depthwise_kernel() const {
    if (distance != 1) throw ParameterError("as_depthwise_kernel: distance must be 1");
    const auto [dy, dx] = direction_offset(direction);
    const std::size_t c = scale.size();
    Tensor k({3, 3, c});
    // out[y][x] = in[y - dy][x - dx]  ->  tap at (-dy, -dx)
    for (std::size_t ch = 0; ch < c; ++ch) k.at(static_cast<std::size_t>(1 - dy), static_cast<std::size_t>(1 - dx), ch) = scale[ch];
    return k;
  }
};

struct InnParams {
  std::array<ShiftOperator, 3> f;
  std::array<ShiftOperator, 3> g;

  // F1..F3 = right, down, left; G1..G3 = up, down-right, up-left. Stage s
  // shifts by distances[s].
  static InnParams make(std::size_t k, std::array<std::size_t, 3> distances = {1, 1, 1}) {
    InnParams p;
    constexpr std::array<Direction, 3> fd{Direction::right, Direction::down, Direction::left};
    constexpr std::array<Direction, 3> gd{Direction::up, Direction::down_right, Direction::up_left};
    for (std::size_t s = 0; s < 3; ++s) {
      p.f[s] = {fd[s], distances[s], Tensor({k})};
      p.g[s] = {gd[s], distances[s], Tensor({k})};
    }
    return p;
  }

  static InnParams random(std::size_t k, SplitMix64& rng, double amplitude = 0.5) {
    InnParams p = make(k);
    for (auto* ops : {&p.f, &p.g})
      for (auto& op : *ops) op.scale = random_uniform({k}, rng, -amplitude, amplitude);
    return p;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& op : f) n += op.scale.size();
    for (const auto& op : g) n += op.scale.size();
    return n;
  }
};

namespace detail {

inline std::size_t inn_quarter(const Tensor& x, const InnParams& p) {
  require_hwc(x, "inn");
  if (x.dim(2) % 4 != 0)
    throw DimensionError("inn: channel count " + std::to_string(x.dim(2)) + " not divisible by 4");
  const std::size_t k = x.dim(2) / 4;
  for (const auto& op : p.f)
    if (op.scale.size() != k) throw DimensionError("inn: operator scale size != C/4");
  for (const auto& op : p.g)
    if (op.scale.size() != k) throw DimensionError("inn: operator scale size != C/4");
  return k;
}

inline Tensor concat_quarters(const Tensor& a, const Tensor& b, const Tensor& c, const Tensor& d) {
  return concat(concat(concat(a, b, 2), c, 2), d, 2);
}

}  // namespace detail

inline Tensor inn_forward(const Tensor& x, const InnParams& p) {
  const std::size_t k = detail::inn_quarter(x, p);
  auto q = split(x, {k, k, k, k}, 2);
  const Tensor y1 = add(q[0], p.f[0].apply(q[1]));
  const Tensor z2 = add(p.g[0].apply(y1), q[1]);
  const Tensor y2 = add(z2, p.f[1].apply(q[2]));
  const Tensor z3 = add(p.g[1].apply(y2), q[2]);
  const Tensor y3 = add(z3, p.f[2].apply(q[3]));
  const Tensor z4 = add(p.g[2].apply(y3), q[3]);
  return detail::concat_quarters(y1, y2, y3, z4);
}

inline Tensor inn_inverse(const Tensor& y, const InnParams& p) {
  const std::size_t k = detail::inn_quarter(y, p);
  auto q = split(y, {k, k, k, k}, 2);
  const Tensor& y1 = q[0];
  const Tensor& y2 = q[1];
  const Tensor& y3 = q[2];
  const Tensor x4 = sub(q[3], p.g[2].apply(y3));
  const Tensor z3 = sub(y3, p.f[2].apply(x4));
  const Tensor x3 = sub(z3, p.g[1].apply(y2));
  const Tensor z2 = sub(y2, p.f[1].apply(x3));
  const Tensor x2 = sub(z2, p.g[0].apply(y1));
  const Tensor x1 = sub(y1, p.f[0].apply(x2));
  return detail::concat_quarters(x1, x2, x3, x4);
}

}  // namespace msps
