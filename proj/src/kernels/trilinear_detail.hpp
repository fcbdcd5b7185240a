#pragma once

#include <cmath>
#include <cstdint>

#include "odereg/kernels.hpp"

namespace odereg::kernels::detail {

// Linear interpolation taps along one axis for a clamped coordinate.
template <class T>
struct AxisTaps {
  std::int64_t i0 = 0, i1 = 0;
  T w1 = T(0);
  bool inside = false;  // false when the coordinate was clamped
};

template <class T>
inline AxisTaps<T> axis_taps(T c, std::int64_t n) {
  if (n == 1) return {0, 0, T(0), false};
  bool inside = true;
  const T hi = static_cast<T>(n - 1);
  if (c < T(0)) {
    c = T(0);
    inside = false;
  } else if (c > hi) {
    c = hi;
    inside = false;
  }
  auto i0 = static_cast<std::int64_t>(std::floor(c));
  if (i0 >= n - 1) i0 = n - 2;
  return {i0, i0 + 1, c - static_cast<T>(i0), inside};
}

template <class T>
struct Trilinear {
  AxisTaps<T> a0, a1, a2;

  Trilinear(const Grid3& g, T c0, T c1, T c2)
      : a0(axis_taps(c0, g.n0)), a1(axis_taps(c1, g.n1)),
        a2(axis_taps(c2, g.n2)) {}

  T sample(const T* src, const Grid3& g) const {
    const T w00 = T(1) - a0.w1, w01 = a0.w1;
    const T w10 = T(1) - a1.w1, w11 = a1.w1;
    const T w20 = T(1) - a2.w1, w21 = a2.w1;
    auto at = [&](std::int64_t i, std::int64_t j, std::int64_t k) {
      return src[g.index(i, j, k)];
    };
    const T c00 = w20 * at(a0.i0, a1.i0, a2.i0) + w21 * at(a0.i0, a1.i0, a2.i1);
    const T c01 = w20 * at(a0.i0, a1.i1, a2.i0) + w21 * at(a0.i0, a1.i1, a2.i1);
    const T c10 = w20 * at(a0.i1, a1.i0, a2.i0) + w21 * at(a0.i1, a1.i0, a2.i1);
    const T c11 = w20 * at(a0.i1, a1.i1, a2.i0) + w21 * at(a0.i1, a1.i1, a2.i1);
    return w00 * (w10 * c00 + w11 * c01) + w01 * (w10 * c10 + w11 * c11);
  }

  // Partial derivatives of sample() with respect to the three coordinates.
  void coordinate_gradient(const T* src, const Grid3& g, T out[3]) const {
    const T w[3][2] = {{T(1) - a0.w1, a0.w1},
                       {T(1) - a1.w1, a1.w1},
                       {T(1) - a2.w1, a2.w1}};
    const std::int64_t i[3][2] = {{a0.i0, a0.i1}, {a1.i0, a1.i1}, {a2.i0, a2.i1}};
    T d0 = 0, d1 = 0, d2 = 0;
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        for (int c = 0; c < 2; ++c) {
          const T v = src[g.index(i[0][a], i[1][b], i[2][c])];
          const T s0 = a ? T(1) : T(-1);
          const T s1 = b ? T(1) : T(-1);
          const T s2 = c ? T(1) : T(-1);
          d0 += s0 * w[1][b] * w[2][c] * v;
          d1 += w[0][a] * s1 * w[2][c] * v;
          d2 += w[0][a] * w[1][b] * s2 * v;
        }
      }
    }
    out[0] = a0.inside ? d0 : T(0);
    out[1] = a1.inside ? d1 : T(0);
    out[2] = a2.inside ? d2 : T(0);
  }

  void scatter(T* dst, const Grid3& g, T value) const {
    const T w[3][2] = {{T(1) - a0.w1, a0.w1},
                       {T(1) - a1.w1, a1.w1},
                       {T(1) - a2.w1, a2.w1}};
    const std::int64_t i[3][2] = {{a0.i0, a0.i1}, {a1.i0, a1.i1}, {a2.i0, a2.i1}};
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (int c = 0; c < 2; ++c)
          dst[g.index(i[0][a], i[1][b], i[2][c])] +=
              w[0][a] * w[1][b] * w[2][c] * value;
  }
};

template <class T>
inline T resample_coordinate(std::int64_t i, std::int64_t n_in,
                             std::int64_t n_out) {
  return (static_cast<T>(i) + T(0.5)) * static_cast<T>(n_in) /
             static_cast<T>(n_out) -
         T(0.5);
}

}  // namespace odereg::kernels::detail
