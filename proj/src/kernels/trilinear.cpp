#include <vector>

#include "odereg/kernels.hpp"
#include "trilinear_detail.hpp"

namespace odereg::kernels {

using detail::Trilinear;

template <class T>
void warp_forward(std::span<const T> src, std::int64_t channels, Grid3 g,
                  std::span<const T> field, std::span<T> out) {
  const std::int64_t n = g.size();
  const T* f0 = field.data();
  const T* f1 = f0 + n;
  const T* f2 = f1 + n;
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < g.n0; ++i) {
    for (std::int64_t j = 0; j < g.n1; ++j) {
      for (std::int64_t k = 0; k < g.n2; ++k) {
        const std::int64_t p = g.index(i, j, k);
        const Trilinear<T> tri(g, static_cast<T>(i) + f0[p],
                               static_cast<T>(j) + f1[p],
                               static_cast<T>(k) + f2[p]);
        for (std::int64_t c = 0; c < channels; ++c) {
          out[c * n + p] = tri.sample(src.data() + c * n, g);
        }
      }
    }
  }
}

template <class T>
void warp_backward(std::span<const T> src, std::int64_t channels, Grid3 g,
                   std::span<const T> field, std::span<const T> dout,
                   std::span<T> dsrc, std::span<T> dfield) {
  const std::int64_t n = g.size();
  const T* f0 = field.data();
  const T* f1 = f0 + n;
  const T* f2 = f1 + n;
  auto taps = [&](std::int64_t p) {
    const std::int64_t i = p / (g.n1 * g.n2);
    const std::int64_t j = (p / g.n2) % g.n1;
    const std::int64_t k = p % g.n2;
    return Trilinear<T>(g, static_cast<T>(i) + f0[p], static_cast<T>(j) + f1[p],
                        static_cast<T>(k) + f2[p]);
  };
  if (!dfield.empty()) {
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < n; ++p) {
      const Trilinear<T> tri = taps(p);
      T acc[3] = {0, 0, 0};
      for (std::int64_t c = 0; c < channels; ++c) {
        T d[3];
        tri.coordinate_gradient(src.data() + c * n, g, d);
        const T go = dout[c * n + p];
        acc[0] += go * d[0];
        acc[1] += go * d[1];
        acc[2] += go * d[2];
      }
      dfield[p] += acc[0];
      dfield[n + p] += acc[1];
      dfield[2 * n + p] += acc[2];
    }
  }
  if (!dsrc.empty()) {
    // Scatter targets collide across voxels, so parallelise over channels.
#pragma omp parallel for schedule(static)
    for (std::int64_t c = 0; c < channels; ++c) {
      T* dst = dsrc.data() + c * n;
      const T* go = dout.data() + c * n;
      for (std::int64_t p = 0; p < n; ++p) {
        if (go[p] != T(0)) taps(p).scatter(dst, g, go[p]);
      }
    }
  }
}

namespace {
template <class T>
struct AxisTable {
  std::vector<detail::AxisTaps<T>> taps;
  AxisTable(std::int64_t n_in, std::int64_t n_out) : taps(n_out) {
    for (std::int64_t i = 0; i < n_out; ++i) {
      taps[i] = detail::axis_taps(detail::resample_coordinate<T>(i, n_in, n_out),
                                  n_in);
    }
  }
};
}  // namespace

template <class T>
void resample_forward(std::span<const T> src, std::int64_t channels, Grid3 in,
                      Grid3 out, std::span<T> dst) {
  const AxisTable<T> t0(in.n0, out.n0), t1(in.n1, out.n1), t2(in.n2, out.n2);
#pragma omp parallel for schedule(static)
  for (std::int64_t c = 0; c < channels; ++c) {
    const T* s = src.data() + c * in.size();
    T* d = dst.data() + c * out.size();
    for (std::int64_t i = 0; i < out.n0; ++i) {
      for (std::int64_t j = 0; j < out.n1; ++j) {
        for (std::int64_t k = 0; k < out.n2; ++k) {
          Trilinear<T> tri(in, T(0), T(0), T(0));
          tri.a0 = t0.taps[i];
          tri.a1 = t1.taps[j];
          tri.a2 = t2.taps[k];
          d[out.index(i, j, k)] = tri.sample(s, in);
        }
      }
    }
  }
}

template <class T>
void resample_backward(std::span<const T> ddst, std::int64_t channels,
                       Grid3 in, Grid3 out, std::span<T> dsrc) {
  const AxisTable<T> t0(in.n0, out.n0), t1(in.n1, out.n1), t2(in.n2, out.n2);
#pragma omp parallel for schedule(static)
  for (std::int64_t c = 0; c < channels; ++c) {
    T* s = dsrc.data() + c * in.size();
    const T* d = ddst.data() + c * out.size();
    for (std::int64_t i = 0; i < out.n0; ++i) {
      for (std::int64_t j = 0; j < out.n1; ++j) {
        for (std::int64_t k = 0; k < out.n2; ++k) {
          Trilinear<T> tri(in, T(0), T(0), T(0));
          tri.a0 = t0.taps[i];
          tri.a1 = t1.taps[j];
          tri.a2 = t2.taps[k];
          tri.scatter(s, in, d[out.index(i, j, k)]);
        }
      }
    }
  }
}

#define ODEREG_INSTANTIATE(T)                                                  \
  template void warp_forward<T>(std::span<const T>, std::int64_t, Grid3,       \
                                std::span<const T>, std::span<T>);             \
  template void warp_backward<T>(std::span<const T>, std::int64_t, Grid3,      \
                                 std::span<const T>, std::span<const T>,       \
                                 std::span<T>, std::span<T>);                  \
  template void resample_forward<T>(std::span<const T>, std::int64_t, Grid3,   \
                                    Grid3, std::span<T>);                      \
  template void resample_backward<T>(std::span<const T>, std::int64_t, Grid3,  \
                                     Grid3, std::span<T>);
ODEREG_INSTANTIATE(float)
ODEREG_INSTANTIATE(double)
#undef ODEREG_INSTANTIATE

}  // namespace odereg::kernels
