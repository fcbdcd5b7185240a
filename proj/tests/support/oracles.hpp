#pragma once

// Brute-force double-precision reference computations written directly from
// the operator definitions. They share no code with the library kernels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "odereg/kernels.hpp"

namespace oracle {

using odereg::kernels::Grid3;

inline bool inside(Grid3 g, std::int64_t i, std::int64_t j, std::int64_t k) {
  return i >= 0 && j >= 0 && k >= 0 && i < g.n0 && j < g.n1 && k < g.n2;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng,
                                         double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// 3x3x3 convolution, zero padding 1; w is [cout, cin, 3, 3, 3].
inline std::vector<double> conv3d(const std::vector<double>& x, std::int64_t cin, Grid3 in,
                                  const std::vector<double>& w, const std::vector<double>& b,
                                  std::int64_t cout, int stride) {
  const Grid3 out{(in.n0 + stride - 1) / stride, (in.n1 + stride - 1) / stride,
                  (in.n2 + stride - 1) / stride};
  std::vector<double> y(static_cast<std::size_t>(cout * out.size()));
  for (std::int64_t co = 0; co < cout; ++co)
    for (std::int64_t o0 = 0; o0 < out.n0; ++o0)
      for (std::int64_t o1 = 0; o1 < out.n1; ++o1)
        for (std::int64_t o2 = 0; o2 < out.n2; ++o2) {
          double acc = b[co];
          for (std::int64_t ci = 0; ci < cin; ++ci)
            for (int d0 = 0; d0 < 3; ++d0)
              for (int d1 = 0; d1 < 3; ++d1)
                for (int d2 = 0; d2 < 3; ++d2) {
                  const std::int64_t i = o0 * stride + d0 - 1;
                  const std::int64_t j = o1 * stride + d1 - 1;
                  const std::int64_t k = o2 * stride + d2 - 1;
                  if (!inside(in, i, j, k)) continue;
                  const double wv = w[(((co * cin + ci) * 3 + d0) * 3 + d1) * 3 + d2];
                  acc += wv * x[ci * in.size() + (i * in.n1 + j) * in.n2 + k];
                }
          y[co * out.size() + (o0 * out.n1 + o1) * out.n2 + o2] = acc;
        }
  return y;
}

// Trilinear sample of one channel at a continuous position, each coordinate
// clamped to [0, n - 1].
inline double sample(const double* f, Grid3 g, double c0, double c1, double c2) {
  const double c[3] = {c0, c1, c2};
  const std::int64_t n[3] = {g.n0, g.n1, g.n2};
  std::int64_t lo[3], hi[3];
  double frac[3];
  for (int a = 0; a < 3; ++a) {
    const double x = std::clamp(c[a], 0.0, static_cast<double>(n[a] - 1));
    lo[a] = static_cast<std::int64_t>(std::floor(x));
    hi[a] = std::min(lo[a] + 1, n[a] - 1);
    frac[a] = x - static_cast<double>(lo[a]);
  }
  double acc = 0.0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int d = 0; d < 2; ++d) {
        const double w = (a ? frac[0] : 1 - frac[0]) * (b ? frac[1] : 1 - frac[1]) *
                         (d ? frac[2] : 1 - frac[2]);
        const std::int64_t i = a ? hi[0] : lo[0];
        const std::int64_t j = b ? hi[1] : lo[1];
        const std::int64_t k = d ? hi[2] : lo[2];
        acc += w * f[(i * g.n1 + j) * g.n2 + k];
      }
  return acc;
}

// out[c](p) = src[c](p + field(p)).
inline std::vector<double> warp(const std::vector<double>& src, std::int64_t channels, Grid3 g,
                                const std::vector<double>& field) {
  const std::int64_t n = g.size();
  std::vector<double> out(src.size());
  for (std::int64_t i = 0; i < g.n0; ++i)
    for (std::int64_t j = 0; j < g.n1; ++j)
      for (std::int64_t k = 0; k < g.n2; ++k) {
        const std::int64_t p = (i * g.n1 + j) * g.n2 + k;
        for (std::int64_t c = 0; c < channels; ++c) {
          out[c * n + p] = sample(src.data() + c * n, g, i + field[p], j + field[n + p],
                                  k + field[2 * n + p]);
        }
      }
  return out;
}

// Voxel-centre aligned resampling; vector_mode rescales component a.
inline std::vector<double> resample(const std::vector<double>& src, std::int64_t channels,
                                    Grid3 in, Grid3 out, bool vector_mode) {
  std::vector<double> dst(static_cast<std::size_t>(channels * out.size()));
  const double r0 = double(in.n0) / out.n0, r1 = double(in.n1) / out.n1,
               r2 = double(in.n2) / out.n2;
  for (std::int64_t c = 0; c < channels; ++c) {
    const double factor =
        vector_mode ? (c == 0 ? 1 / r0 : (c == 1 ? 1 / r1 : 1 / r2)) : 1.0;
    for (std::int64_t i = 0; i < out.n0; ++i)
      for (std::int64_t j = 0; j < out.n1; ++j)
        for (std::int64_t k = 0; k < out.n2; ++k) {
          dst[c * out.size() + (i * out.n1 + j) * out.n2 + k] =
              factor * sample(src.data() + c * in.size(), in, (i + 0.5) * r0 - 0.5,
                              (j + 0.5) * r1 - 0.5, (k + 0.5) * r2 - 0.5);
        }
  }
  return dst;
}

// Cost volume: both maps standardised with one joint mean and (population)
// standard deviation, then correlated over shifts in [-r, r]^3.
inline std::vector<double> cost_volume(std::vector<double> a, std::vector<double> b,
                                       std::int64_t channels, Grid3 g, int r,
                                       double eps = 1e-12) {
  double mu = 0.0;
  for (double v : a) mu += v;
  for (double v : b) mu += v;
  mu /= static_cast<double>(a.size() + b.size());
  double var = 0.0;
  for (double v : a) var += (v - mu) * (v - mu);
  for (double v : b) var += (v - mu) * (v - mu);
  var /= static_cast<double>(a.size() + b.size());
  const double s = std::sqrt(var + eps);
  for (auto& v : a) v = (v - mu) / s;
  for (auto& v : b) v = (v - mu) / s;
  const std::int64_t n = g.size();
  const std::int64_t shifts = (2 * r + 1) * (2 * r + 1) * (2 * r + 1);
  std::vector<double> out(static_cast<std::size_t>(shifts * n), 0.0);
  std::int64_t kidx = 0;
  for (int s0 = -r; s0 <= r; ++s0)
    for (int s1 = -r; s1 <= r; ++s1)
      for (int s2 = -r; s2 <= r; ++s2, ++kidx)
        for (std::int64_t i = 0; i < g.n0; ++i)
          for (std::int64_t j = 0; j < g.n1; ++j)
            for (std::int64_t k = 0; k < g.n2; ++k) {
              if (!inside(g, i + s0, j + s1, k + s2)) continue;
              const std::int64_t p = (i * g.n1 + j) * g.n2 + k;
              const std::int64_t q = ((i + s0) * g.n1 + j + s1) * g.n2 + k + s2;
              double acc = 0.0;
              for (std::int64_t c = 0; c < channels; ++c) acc += a[c * n + p] * b[c * n + q];
              out[kidx * n + p] = acc;
            }
  return out;
}

// -sum_p cross^2 / (var_i var_j + eps) over windows of width w clipped to the
// volume, with window statistics computed by direct enumeration.
inline double ncc(const std::vector<double>& I, const std::vector<double>& J, Grid3 g, int w,
                  double eps) {
  const int r = w / 2;
  double total = 0.0;
  for (std::int64_t i = 0; i < g.n0; ++i)
    for (std::int64_t j = 0; j < g.n1; ++j)
      for (std::int64_t k = 0; k < g.n2; ++k) {
        double si = 0, sj = 0, sii = 0, sjj = 0, sij = 0, count = 0;
        for (int a = -r; a <= r; ++a)
          for (int b = -r; b <= r; ++b)
            for (int c = -r; c <= r; ++c) {
              if (!inside(g, i + a, j + b, k + c)) continue;
              const std::int64_t q = ((i + a) * g.n1 + j + b) * g.n2 + k + c;
              si += I[q];
              sj += J[q];
              sii += I[q] * I[q];
              sjj += J[q] * J[q];
              sij += I[q] * J[q];
              count += 1;
            }
        const double mi = si / count, mj = sj / count;
        const double cross = sij - count * mi * mj;
        const double vi = sii - count * mi * mi;
        const double vj = sjj - count * mj * mj;
        total += cross * cross / (vi * vj + eps);
      }
  return -total;
}

// Sum over axes of the mean squared forward difference, all components.
inline double smoothness(const std::vector<double>& phi, std::int64_t channels, Grid3 g) {
  const std::int64_t n = g.size();
  double total = 0.0;
  for (int axis = 0; axis < 3; ++axis) {
    double acc = 0.0;
    std::int64_t count = 0;
    for (std::int64_t c = 0; c < channels; ++c)
      for (std::int64_t i = 0; i < g.n0; ++i)
        for (std::int64_t j = 0; j < g.n1; ++j)
          for (std::int64_t k = 0; k < g.n2; ++k) {
            const std::int64_t di = axis == 0, dj = axis == 1, dk = axis == 2;
            if (!inside(g, i + di, j + dj, k + dk)) continue;
            const double d = phi[c * n + ((i + di) * g.n1 + j + dj) * g.n2 + k + dk] -
                             phi[c * n + (i * g.n1 + j) * g.n2 + k];
            acc += d * d;
            if (c == 0) ++count;
          }
    total += acc / static_cast<double>(count);
  }
  return total;
}

// det(I + grad phi): central differences inside, one-sided at the faces.
inline std::vector<double> jacobian(const std::vector<double>& phi, Grid3 g) {
  const std::int64_t n = g.size();
  std::vector<double> det(static_cast<std::size_t>(n));
  auto at = [&](int c, std::int64_t i, std::int64_t j, std::int64_t k) {
    return phi[c * n + (i * g.n1 + j) * g.n2 + k];
  };
  for (std::int64_t i = 0; i < g.n0; ++i)
    for (std::int64_t j = 0; j < g.n1; ++j)
      for (std::int64_t k = 0; k < g.n2; ++k) {
        double m[3][3];
        for (int b = 0; b < 3; ++b) {
          const std::int64_t pos[3] = {i, j, k};
          const std::int64_t len = g.extent(b);
          std::int64_t lo[3] = {i, j, k}, hi[3] = {i, j, k};
          if (pos[b] > 0) lo[b] -= 1;
          if (pos[b] < len - 1) hi[b] += 1;
          const double span = static_cast<double>(hi[b] - lo[b]);
          for (int a = 0; a < 3; ++a) {
            m[a][b] = (at(a, hi[0], hi[1], hi[2]) - at(a, lo[0], lo[1], lo[2])) / span +
                      (a == b ? 1.0 : 0.0);
          }
        }
        det[(i * g.n1 + j) * g.n2 + k] =
            m[0][0] * m[1][1] * m[2][2] + m[0][1] * m[1][2] * m[2][0] +
            m[0][2] * m[1][0] * m[2][1] - m[0][2] * m[1][1] * m[2][0] -
            m[0][1] * m[1][0] * m[2][2] - m[0][0] * m[1][2] * m[2][1];
      }
  return det;
}

// Largest |a - b| relative to max(|b|, floor).
inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b,
                                 double floor = 1.0) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(std::abs(b[i]), floor));
  }
  return worst;
}

}  // namespace oracle
