#include <cblas.h>

#include <algorithm>
#include <vector>

#include "odereg/kernels.hpp"

namespace odereg::kernels {

namespace {
constexpr int kTaps = 27;

CBLAS_TRANSPOSE blas_trans(bool t) { return t ? CblasTrans : CblasNoTrans; }

// Scratch buffers reused across calls on the same thread; grown, never shrunk.
template <class T>
std::vector<T>& scratch(int slot, std::size_t size) {
  thread_local std::vector<T> buffers[4];
  auto& b = buffers[slot];
  if (b.size() < size) b.resize(size);
  return b;
}

// dst[p * channels + c] = src[c * n + p]
template <class T>
void to_channels_last(const T* src, std::int64_t channels, std::int64_t n, T* dst) {
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < n; ++p)
    for (std::int64_t c = 0; c < channels; ++c) dst[p * channels + c] = src[c * n + p];
}

// Input voxel read by output voxel o through tap offset d along one axis, or -1.
inline std::int64_t tap_source(std::int64_t o, int d, int stride, std::int64_t n) {
  const std::int64_t i = o * stride + d;
  return (i < 0 || i >= n) ? -1 : i;
}

// patches[m * K + tap * cin + ci] = x[ci, o(m) * stride + d(tap) - 1], 0 outside.
// xt is the channels-last input.
template <class T>
void gather_patches(const T* xt, std::int64_t cin, Grid3 in, Grid3 out, int stride,
                    T* patches) {
  const std::int64_t k = cin * kTaps;
#pragma omp parallel for schedule(static)
  for (std::int64_t o0 = 0; o0 < out.n0; ++o0) {
    for (std::int64_t o1 = 0; o1 < out.n1; ++o1) {
      for (std::int64_t o2 = 0; o2 < out.n2; ++o2) {
        T* row = patches + out.index(o0, o1, o2) * k;
        for (int tap = 0; tap < kTaps; ++tap) {
          const std::int64_t i0 = tap_source(o0, tap / 9 - 1, stride, in.n0);
          const std::int64_t i1 = tap_source(o1, (tap / 3) % 3 - 1, stride, in.n1);
          const std::int64_t i2 = tap_source(o2, tap % 3 - 1, stride, in.n2);
          T* dst = row + tap * cin;
          if (i0 < 0 || i1 < 0 || i2 < 0) {
            std::fill_n(dst, cin, T(0));
          } else {
            std::copy_n(xt + in.index(i0, i1, i2) * cin, cin, dst);
          }
        }
      }
    }
  }
}

// Adjoint of gather_patches written as a gather over input voxels, so each
// input voxel is owned by one thread. Accumulates into channel-major dx.
template <class T>
void scatter_patches(const T* dpatches, std::int64_t cin, Grid3 in, Grid3 out,
                     int stride, T* dx) {
  const std::int64_t k = cin * kTaps;
  const std::int64_t n_in = in.size();
  auto output_of = [stride](std::int64_t i, int d, std::int64_t n) -> std::int64_t {
    const std::int64_t s = i - d;
    if (s < 0 || s % stride != 0) return -1;
    const std::int64_t o = s / stride;
    return o < n ? o : -1;
  };
#pragma omp parallel
  {
    std::vector<T> acc(static_cast<std::size_t>(cin));
#pragma omp for schedule(static)
    for (std::int64_t i0 = 0; i0 < in.n0; ++i0) {
      for (std::int64_t i1 = 0; i1 < in.n1; ++i1) {
        for (std::int64_t i2 = 0; i2 < in.n2; ++i2) {
          std::fill(acc.begin(), acc.end(), T(0));
          for (int tap = 0; tap < kTaps; ++tap) {
            const std::int64_t o0 = output_of(i0, tap / 9 - 1, out.n0);
            const std::int64_t o1 = output_of(i1, (tap / 3) % 3 - 1, out.n1);
            const std::int64_t o2 = output_of(i2, tap % 3 - 1, out.n2);
            if (o0 < 0 || o1 < 0 || o2 < 0) continue;
            const T* src = dpatches + out.index(o0, o1, o2) * k + tap * cin;
            for (std::int64_t c = 0; c < cin; ++c) acc[c] += src[c];
          }
          const std::int64_t p = in.index(i0, i1, i2);
          for (std::int64_t c = 0; c < cin; ++c) dx[c * n_in + p] += acc[c];
        }
      }
    }
  }
}

// [cout, cin, 27] <-> [cout, 27, cin]
template <class T>
void weights_tap_major(const T* w, std::int64_t cout, std::int64_t cin, T* wt) {
  for (std::int64_t co = 0; co < cout; ++co)
    for (std::int64_t ci = 0; ci < cin; ++ci)
      for (int tap = 0; tap < kTaps; ++tap)
        wt[(co * kTaps + tap) * cin + ci] = w[(co * cin + ci) * kTaps + tap];
}

}  // namespace

void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n,
          std::int64_t k, float alpha, const float* a, const float* b,
          float beta, float* c) {
  cblas_sgemm(CblasRowMajor, blas_trans(trans_a), blas_trans(trans_b),
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k),
              alpha, a, static_cast<int>(trans_a ? m : k), b,
              static_cast<int>(trans_b ? k : n), beta, c, static_cast<int>(n));
}

void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n,
          std::int64_t k, double alpha, const double* a, const double* b,
          double beta, double* c) {
  cblas_dgemm(CblasRowMajor, blas_trans(trans_a), blas_trans(trans_b),
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k),
              alpha, a, static_cast<int>(trans_a ? m : k), b,
              static_cast<int>(trans_b ? k : n), beta, c, static_cast<int>(n));
}

template <class T>
void conv3d_forward(std::span<const T> x, std::int64_t cin, Grid3 in,
                    std::span<const T> w, std::span<const T> b,
                    std::int64_t cout, int stride, std::span<T> y) {
  const Grid3 out = conv_output_grid(in, stride);
  const std::int64_t m = out.size();
  const std::int64_t k = cin * kTaps;
  T* xt = scratch<T>(0, static_cast<std::size_t>(in.size() * cin)).data();
  T* patches = scratch<T>(1, static_cast<std::size_t>(m * k)).data();
  T* wt = scratch<T>(2, static_cast<std::size_t>(cout * k)).data();
  T* yt = scratch<T>(3, static_cast<std::size_t>(m * cout)).data();
  to_channels_last(x.data(), cin, in.size(), xt);
  gather_patches(xt, cin, in, out, stride, patches);
  weights_tap_major(w.data(), cout, cin, wt);
  gemm(false, true, m, cout, k, T(1), patches, wt, T(0), yt);
#pragma omp parallel for schedule(static)
  for (std::int64_t co = 0; co < cout; ++co) {
    const T bias = b.empty() ? T(0) : b[co];
    T* dst = y.data() + co * m;
    for (std::int64_t i = 0; i < m; ++i) dst[i] = yt[i * cout + co] + bias;
  }
}

template <class T>
void conv3d_backward(std::span<const T> x, std::int64_t cin, Grid3 in,
                     std::span<const T> w, std::int64_t cout, int stride,
                     std::span<const T> dy, std::span<T> dx, std::span<T> dw,
                     std::span<T> db) {
  const Grid3 out = conv_output_grid(in, stride);
  const std::int64_t m = out.size();
  const std::int64_t k = cin * kTaps;
  if (!db.empty()) {
    for (std::int64_t co = 0; co < cout; ++co) {
      T acc = 0;
      const T* row = dy.data() + co * m;
      for (std::int64_t i = 0; i < m; ++i) acc += row[i];
      db[co] += acc;
    }
  }
  if (dw.empty() && dx.empty()) return;
  T* dyt = scratch<T>(3, static_cast<std::size_t>(m * cout)).data();
  to_channels_last(dy.data(), cout, m, dyt);
  if (!dw.empty()) {
    T* xt = scratch<T>(0, static_cast<std::size_t>(in.size() * cin)).data();
    T* patches = scratch<T>(1, static_cast<std::size_t>(m * k)).data();
    T* dwt = scratch<T>(2, static_cast<std::size_t>(cout * k)).data();
    to_channels_last(x.data(), cin, in.size(), xt);
    gather_patches(xt, cin, in, out, stride, patches);
    gemm(true, false, cout, k, m, T(1), dyt, patches, T(0), dwt);
    for (std::int64_t co = 0; co < cout; ++co)
      for (std::int64_t ci = 0; ci < cin; ++ci)
        for (int tap = 0; tap < kTaps; ++tap)
          dw[(co * cin + ci) * kTaps + tap] += dwt[(co * kTaps + tap) * cin + ci];
  }
  if (!dx.empty()) {
    T* wt = scratch<T>(2, static_cast<std::size_t>(cout * k)).data();
    T* dpatches = scratch<T>(1, static_cast<std::size_t>(m * k)).data();
    weights_tap_major(w.data(), cout, cin, wt);
    gemm(false, false, m, k, cout, T(1), dyt, wt, T(0), dpatches);
    scatter_patches(dpatches, cin, in, out, stride, dx.data());
  }
}

template void conv3d_forward<float>(std::span<const float>, std::int64_t, Grid3,
                                    std::span<const float>, std::span<const float>,
                                    std::int64_t, int, std::span<float>);
template void conv3d_forward<double>(std::span<const double>, std::int64_t, Grid3,
                                     std::span<const double>, std::span<const double>,
                                     std::int64_t, int, std::span<double>);
template void conv3d_backward<float>(std::span<const float>, std::int64_t, Grid3,
                                     std::span<const float>, std::int64_t, int,
                                     std::span<const float>, std::span<float>,
                                     std::span<float>, std::span<float>);
template void conv3d_backward<double>(std::span<const double>, std::int64_t, Grid3,
                                      std::span<const double>, std::int64_t, int,
                                      std::span<const double>, std::span<double>,
                                      std::span<double>, std::span<double>);

}  // namespace odereg::kernels
