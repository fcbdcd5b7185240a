#pragma once

// Raw numeric kernels over channel-major volumes [C, n0, n1, n2] (n2 fastest).
//
// Every kernel has an OpenMP-parallel implementation in odereg::kernels and a
// plain serial implementation in odereg::kernels::reference. The reference
// versions are slow and exist for testing and benchmarking; the differentiable
// ops in ops.hpp always call the parallel versions.
//
// Backward kernels accumulate into their output spans. An empty output span
// means that gradient is not needed.

#include <cstdint>
#include <span>
#include <vector>

namespace odereg::kernels {

struct Grid3 {
  std::int64_t n0 = 0, n1 = 0, n2 = 0;

  std::int64_t size() const { return n0 * n1 * n2; }
  std::int64_t index(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return (i * n1 + j) * n2 + k;
  }
  std::int64_t extent(int axis) const {
    return axis == 0 ? n0 : (axis == 1 ? n1 : n2);
  }
  friend bool operator==(const Grid3&, const Grid3&) = default;
};

// Output grid of a 3x3x3 convolution with padding 1.
inline Grid3 conv_output_grid(Grid3 in, int stride) {
  auto out = [stride](std::int64_t n) { return (n + stride - 1) / stride; };
  return {out(in.n0), out(in.n1), out(in.n2)};
}

// Row-major C = alpha * op(A) * op(B) + beta * C, backed by BLAS.
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n,
          std::int64_t k, float alpha, const float* a, const float* b,
          float beta, float* c);
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n,
          std::int64_t k, double alpha, const double* a, const double* b,
          double beta, double* c);

// 3x3x3 convolution, padding 1, stride 1 or 2.
// x: [cin, in], w: [cout, cin, 27], b: [cout], y: [cout, conv_output_grid(in)].
template <class T>
void conv3d_forward(std::span<const T> x, std::int64_t cin, Grid3 in,
                    std::span<const T> w, std::span<const T> b,
                    std::int64_t cout, int stride, std::span<T> y);

template <class T>
void conv3d_backward(std::span<const T> x, std::int64_t cin, Grid3 in,
                     std::span<const T> w, std::int64_t cout, int stride,
                     std::span<const T> dy, std::span<T> dx, std::span<T> dw,
                     std::span<T> db);

// Trilinear sampling of src at p + field(p), coordinates clamped to the grid.
// src/out: [channels, g], field: [3, g] with component a displacing axis a.
template <class T>
void warp_forward(std::span<const T> src, std::int64_t channels, Grid3 g,
                  std::span<const T> field, std::span<T> out);

template <class T>
void warp_backward(std::span<const T> src, std::int64_t channels, Grid3 g,
                   std::span<const T> field, std::span<const T> dout,
                   std::span<T> dsrc, std::span<T> dfield);

// Trilinear resampling between grids with voxel-centre alignment:
// source coordinate = (i + 0.5) * n_in / n_out - 0.5, clamped.
template <class T>
void resample_forward(std::span<const T> src, std::int64_t channels, Grid3 in,
                      Grid3 out, std::span<T> dst);

template <class T>
void resample_backward(std::span<const T> ddst, std::int64_t channels,
                       Grid3 in, Grid3 out, std::span<T> dsrc);

// out[k, p] = sum_c a[c, p] * b[c, p + shift_k] for shift_k in [-r, r]^3,
// zero where p + shift_k leaves the grid. Shift index k enumerates
// (s0, s1, s2) with s2 fastest.
template <class T>
void correlation_forward(std::span<const T> a, std::span<const T> b,
                         std::int64_t channels, Grid3 g, int radius,
                         std::span<T> out);

template <class T>
void correlation_backward(std::span<const T> a, std::span<const T> b,
                          std::int64_t channels, Grid3 g, int radius,
                          std::span<const T> dout, std::span<T> da,
                          std::span<T> db);

// Zero-padded cubic window sum of half-width `radius` (window 2r+1).
void box_sum(std::span<const double> in, Grid3 g, int radius,
             std::span<double> out);

namespace reference {

template <class T>
void conv3d_forward(std::span<const T> x, std::int64_t cin, Grid3 in,
                    std::span<const T> w, std::span<const T> b,
                    std::int64_t cout, int stride, std::span<T> y);

template <class T>
void conv3d_backward(std::span<const T> x, std::int64_t cin, Grid3 in,
                     std::span<const T> w, std::int64_t cout, int stride,
                     std::span<const T> dy, std::span<T> dx, std::span<T> dw,
                     std::span<T> db);

template <class T>
void warp_forward(std::span<const T> src, std::int64_t channels, Grid3 g,
                  std::span<const T> field, std::span<T> out);

template <class T>
void warp_backward(std::span<const T> src, std::int64_t channels, Grid3 g,
                   std::span<const T> field, std::span<const T> dout,
                   std::span<T> dsrc, std::span<T> dfield);

template <class T>
void resample_forward(std::span<const T> src, std::int64_t channels, Grid3 in,
                      Grid3 out, std::span<T> dst);

template <class T>
void correlation_forward(std::span<const T> a, std::span<const T> b,
                         std::int64_t channels, Grid3 g, int radius,
                         std::span<T> out);

void box_sum(std::span<const double> in, Grid3 g, int radius,
             std::span<double> out);

}  // namespace reference

}  // namespace odereg::kernels
