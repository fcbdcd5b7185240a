#include <vector>

#include "odereg/kernels.hpp"

namespace odereg::kernels {

namespace {
struct Shift {
  int s0, s1, s2;
};

std::vector<Shift> shifts(int radius) {
  std::vector<Shift> out;
  for (int s0 = -radius; s0 <= radius; ++s0)
    for (int s1 = -radius; s1 <= radius; ++s1)
      for (int s2 = -radius; s2 <= radius; ++s2) out.push_back({s0, s1, s2});
  return out;
}

inline bool in_grid(const Grid3& g, std::int64_t i, std::int64_t j,
                    std::int64_t k) {
  return i >= 0 && j >= 0 && k >= 0 && i < g.n0 && j < g.n1 && k < g.n2;
}
}  // namespace

template <class T>
void correlation_forward(std::span<const T> a, std::span<const T> b,
                         std::int64_t channels, Grid3 g, int radius,
                         std::span<T> out) {
  const auto sh = shifts(radius);
  const std::int64_t n = g.size();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < g.n0; ++i) {
    for (std::int64_t j = 0; j < g.n1; ++j) {
      for (std::int64_t k = 0; k < g.n2; ++k) {
        const std::int64_t p = g.index(i, j, k);
        for (std::size_t s = 0; s < sh.size(); ++s) {
          const std::int64_t qi = i + sh[s].s0, qj = j + sh[s].s1,
                             qk = k + sh[s].s2;
          T acc = 0;
          if (in_grid(g, qi, qj, qk)) {
            const std::int64_t q = g.index(qi, qj, qk);
            for (std::int64_t c = 0; c < channels; ++c) {
              acc += a[c * n + p] * b[c * n + q];
            }
          }
          out[static_cast<std::int64_t>(s) * n + p] = acc;
        }
      }
    }
  }
}

template <class T>
void correlation_backward(std::span<const T> a, std::span<const T> b,
                          std::int64_t channels, Grid3 g, int radius,
                          std::span<const T> dout, std::span<T> da,
                          std::span<T> db) {
  const auto sh = shifts(radius);
  const std::int64_t n = g.size();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < g.n0; ++i) {
    for (std::int64_t j = 0; j < g.n1; ++j) {
      for (std::int64_t k = 0; k < g.n2; ++k) {
        const std::int64_t p = g.index(i, j, k);
        for (std::size_t s = 0; s < sh.size(); ++s) {
          const auto si = static_cast<std::int64_t>(s);
          // p as the a-side voxel: partner p + shift.
          if (!da.empty()) {
            const std::int64_t qi = i + sh[s].s0, qj = j + sh[s].s1,
                               qk = k + sh[s].s2;
            if (in_grid(g, qi, qj, qk)) {
              const T go = dout[si * n + p];
              const std::int64_t q = g.index(qi, qj, qk);
              for (std::int64_t c = 0; c < channels; ++c) {
                da[c * n + p] += go * b[c * n + q];
              }
            }
          }
          // p as the b-side voxel: partner p - shift.
          if (!db.empty()) {
            const std::int64_t qi = i - sh[s].s0, qj = j - sh[s].s1,
                               qk = k - sh[s].s2;
            if (in_grid(g, qi, qj, qk)) {
              const std::int64_t q = g.index(qi, qj, qk);
              const T go = dout[si * n + q];
              for (std::int64_t c = 0; c < channels; ++c) {
                db[c * n + p] += go * a[c * n + q];
              }
            }
          }
        }
      }
    }
  }
}

template void correlation_forward<float>(std::span<const float>,
                                         std::span<const float>, std::int64_t,
                                         Grid3, int, std::span<float>);
template void correlation_forward<double>(std::span<const double>,
                                          std::span<const double>, std::int64_t,
                                          Grid3, int, std::span<double>);
template void correlation_backward<float>(std::span<const float>,
                                          std::span<const float>, std::int64_t,
                                          Grid3, int, std::span<const float>,
                                          std::span<float>, std::span<float>);
template void correlation_backward<double>(std::span<const double>,
                                           std::span<const double>,
                                           std::int64_t, Grid3, int,
                                           std::span<const double>,
                                           std::span<double>, std::span<double>);

// Three separable running-sum passes.
void box_sum(std::span<const double> in, Grid3 g, int radius,
             std::span<double> out) {
  std::vector<double> a(in.begin(), in.end());
  std::vector<double> b(a.size());
  const std::int64_t strides[3] = {g.n1 * g.n2, g.n2, 1};
  for (int axis = 0; axis < 3; ++axis) {
    const std::int64_t len = g.extent(axis);
    const std::int64_t stride = strides[axis];
    const std::int64_t lines = g.size() / len;
#pragma omp parallel for schedule(static)
    for (std::int64_t line = 0; line < lines; ++line) {
      // Base offset of the line: decompose over the two non-axis dims.
      std::int64_t base;
      if (axis == 0) {
        base = line;
      } else if (axis == 1) {
        base = (line / g.n2) * g.n1 * g.n2 + line % g.n2;
      } else {
        base = line * g.n2;
      }
      double running = 0.0;
      for (std::int64_t t = 0; t < std::min<std::int64_t>(radius, len); ++t) {
        running += a[base + t * stride];
      }
      for (std::int64_t t = 0; t < len; ++t) {
        const std::int64_t add = t + radius;
        const std::int64_t drop = t - radius - 1;
        if (add < len) running += a[base + add * stride];
        if (drop >= 0) running -= a[base + drop * stride];
        b[base + t * stride] = running;
      }
    }
    std::swap(a, b);
  }
  std::copy(a.begin(), a.end(), out.begin());
}

}  // namespace odereg::kernels
