// Serial reference kernels. Straight nested loops, no BLAS, no OpenMP.

#include "odereg/kernels.hpp"
#include "trilinear_detail.hpp"

namespace odereg::kernels::reference {

using detail::Trilinear;

template <class T>
void conv3d_forward(std::span<const T> x, std::int64_t cin, Grid3 in,
                    std::span<const T> w, std::span<const T> b,
                    std::int64_t cout, int stride, std::span<T> y) {
  const Grid3 out = conv_output_grid(in, stride);
  for (std::int64_t co = 0; co < cout; ++co) {
    for (std::int64_t o0 = 0; o0 < out.n0; ++o0) {
      for (std::int64_t o1 = 0; o1 < out.n1; ++o1) {
        for (std::int64_t o2 = 0; o2 < out.n2; ++o2) {
          T acc = b.empty() ? T(0) : b[co];
          for (std::int64_t ci = 0; ci < cin; ++ci) {
            for (int tap = 0; tap < 27; ++tap) {
              const std::int64_t i0 = o0 * stride + tap / 9 - 1;
              const std::int64_t i1 = o1 * stride + (tap / 3) % 3 - 1;
              const std::int64_t i2 = o2 * stride + tap % 3 - 1;
              if (i0 < 0 || i1 < 0 || i2 < 0 || i0 >= in.n0 || i1 >= in.n1 ||
                  i2 >= in.n2)
                continue;
              acc += w[(co * cin + ci) * 27 + tap] *
                     x[ci * in.size() + in.index(i0, i1, i2)];
            }
          }
          y[co * out.size() + out.index(o0, o1, o2)] = acc;
        }
      }
    }
  }
}

template <class T>
void conv3d_backward(std::span<const T> x, std::int64_t cin, Grid3 in,
                     std::span<const T> w, std::int64_t cout, int stride,
                     std::span<const T> dy, std::span<T> dx, std::span<T> dw,
                     std::span<T> db) {
  const Grid3 out = conv_output_grid(in, stride);
  for (std::int64_t co = 0; co < cout; ++co) {
    for (std::int64_t o0 = 0; o0 < out.n0; ++o0) {
      for (std::int64_t o1 = 0; o1 < out.n1; ++o1) {
        for (std::int64_t o2 = 0; o2 < out.n2; ++o2) {
          const T g = dy[co * out.size() + out.index(o0, o1, o2)];
          if (!db.empty()) db[co] += g;
          for (std::int64_t ci = 0; ci < cin; ++ci) {
            for (int tap = 0; tap < 27; ++tap) {
              const std::int64_t i0 = o0 * stride + tap / 9 - 1;
              const std::int64_t i1 = o1 * stride + (tap / 3) % 3 - 1;
              const std::int64_t i2 = o2 * stride + tap % 3 - 1;
              if (i0 < 0 || i1 < 0 || i2 < 0 || i0 >= in.n0 || i1 >= in.n1 ||
                  i2 >= in.n2)
                continue;
              const std::int64_t xi = ci * in.size() + in.index(i0, i1, i2);
              const std::int64_t wi = (co * cin + ci) * 27 + tap;
              if (!dw.empty()) dw[wi] += g * x[xi];
              if (!dx.empty()) dx[xi] += g * w[wi];
            }
          }
        }
      }
    }
  }
}

template <class T>
void warp_forward(std::span<const T> src, std::int64_t channels, Grid3 g,
                  std::span<const T> field, std::span<T> out) {
  const std::int64_t n = g.size();
  for (std::int64_t c = 0; c < channels; ++c) {
    for (std::int64_t i = 0; i < g.n0; ++i)
      for (std::int64_t j = 0; j < g.n1; ++j)
        for (std::int64_t k = 0; k < g.n2; ++k) {
          const std::int64_t p = g.index(i, j, k);
          const Trilinear<T> tri(g, static_cast<T>(i) + field[p],
                                 static_cast<T>(j) + field[n + p],
                                 static_cast<T>(k) + field[2 * n + p]);
          out[c * n + p] = tri.sample(src.data() + c * n, g);
        }
  }
}

template <class T>
void warp_backward(std::span<const T> src, std::int64_t channels, Grid3 g,
                   std::span<const T> field, std::span<const T> dout,
                   std::span<T> dsrc, std::span<T> dfield) {
  const std::int64_t n = g.size();
  for (std::int64_t c = 0; c < channels; ++c) {
    for (std::int64_t i = 0; i < g.n0; ++i)
      for (std::int64_t j = 0; j < g.n1; ++j)
        for (std::int64_t k = 0; k < g.n2; ++k) {
          const std::int64_t p = g.index(i, j, k);
          const Trilinear<T> tri(g, static_cast<T>(i) + field[p],
                                 static_cast<T>(j) + field[n + p],
                                 static_cast<T>(k) + field[2 * n + p]);
          const T go = dout[c * n + p];
          if (!dsrc.empty()) tri.scatter(dsrc.data() + c * n, g, go);
          if (!dfield.empty()) {
            T d[3];
            tri.coordinate_gradient(src.data() + c * n, g, d);
            for (int a = 0; a < 3; ++a) dfield[a * n + p] += go * d[a];
          }
        }
  }
}

template <class T>
void resample_forward(std::span<const T> src, std::int64_t channels, Grid3 in,
                      Grid3 out, std::span<T> dst) {
  for (std::int64_t c = 0; c < channels; ++c)
    for (std::int64_t i = 0; i < out.n0; ++i)
      for (std::int64_t j = 0; j < out.n1; ++j)
        for (std::int64_t k = 0; k < out.n2; ++k) {
          const Trilinear<T> tri(in,
                                 detail::resample_coordinate<T>(i, in.n0, out.n0),
                                 detail::resample_coordinate<T>(j, in.n1, out.n1),
                                 detail::resample_coordinate<T>(k, in.n2, out.n2));
          dst[c * out.size() + out.index(i, j, k)] =
              tri.sample(src.data() + c * in.size(), in);
        }
}

template <class T>
void correlation_forward(std::span<const T> a, std::span<const T> b,
                         std::int64_t channels, Grid3 g, int radius,
                         std::span<T> out) {
  const std::int64_t n = g.size();
  std::int64_t s = 0;
  for (int s0 = -radius; s0 <= radius; ++s0)
    for (int s1 = -radius; s1 <= radius; ++s1)
      for (int s2 = -radius; s2 <= radius; ++s2, ++s)
        for (std::int64_t i = 0; i < g.n0; ++i)
          for (std::int64_t j = 0; j < g.n1; ++j)
            for (std::int64_t k = 0; k < g.n2; ++k) {
              const std::int64_t p = g.index(i, j, k);
              const std::int64_t qi = i + s0, qj = j + s1, qk = k + s2;
              T acc = 0;
              if (qi >= 0 && qj >= 0 && qk >= 0 && qi < g.n0 && qj < g.n1 &&
                  qk < g.n2) {
                for (std::int64_t c = 0; c < channels; ++c)
                  acc += a[c * n + p] * b[c * n + g.index(qi, qj, qk)];
              }
              out[s * n + p] = acc;
            }
}

void box_sum(std::span<const double> in, Grid3 g, int radius,
             std::span<double> out) {
  for (std::int64_t i = 0; i < g.n0; ++i)
    for (std::int64_t j = 0; j < g.n1; ++j)
      for (std::int64_t k = 0; k < g.n2; ++k) {
        double acc = 0.0;
        for (std::int64_t a = i - radius; a <= i + radius; ++a)
          for (std::int64_t b = j - radius; b <= j + radius; ++b)
            for (std::int64_t c = k - radius; c <= k + radius; ++c)
              if (a >= 0 && b >= 0 && c >= 0 && a < g.n0 && b < g.n1 && c < g.n2)
                acc += in[g.index(a, b, c)];
        out[g.index(i, j, k)] = acc;
      }
}

#define ODEREG_INSTANTIATE(T)                                                  \
  template void conv3d_forward<T>(std::span<const T>, std::int64_t, Grid3,     \
                                  std::span<const T>, std::span<const T>,      \
                                  std::int64_t, int, std::span<T>);            \
  template void conv3d_backward<T>(std::span<const T>, std::int64_t, Grid3,    \
                                   std::span<const T>, std::int64_t, int,      \
                                   std::span<const T>, std::span<T>,           \
                                   std::span<T>, std::span<T>);                \
  template void warp_forward<T>(std::span<const T>, std::int64_t, Grid3,       \
                                std::span<const T>, std::span<T>);             \
  template void warp_backward<T>(std::span<const T>, std::int64_t, Grid3,      \
                                 std::span<const T>, std::span<const T>,       \
                                 std::span<T>, std::span<T>);                  \
  template void resample_forward<T>(std::span<const T>, std::int64_t, Grid3,   \
                                    Grid3, std::span<T>);                      \
  template void correlation_forward<T>(std::span<const T>, std::span<const T>, \
                                       std::int64_t, Grid3, int, std::span<T>);
ODEREG_INSTANTIATE(float)
ODEREG_INSTANTIATE(double)
#undef ODEREG_INSTANTIATE

}  // namespace odereg::kernels::reference
