// Parallel kernels against their serial reference implementations, at the
// feature-map sizes of a 32^3 registration.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "odereg/kernels.hpp"

using namespace odereg::kernels;

namespace {

std::vector<float> random_floats(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Args: channels in, channels out, spatial extent, stride.
template <bool Reference>
void BM_Conv3dForward(benchmark::State& state) {
  const std::int64_t cin = state.range(0), cout = state.range(1), n = state.range(2);
  const int stride = static_cast<int>(state.range(3));
  const Grid3 g{n, n, n};
  const auto x = random_floats(cin * g.size(), 1);
  const auto w = random_floats(cout * cin * 27, 2);
  const auto b = random_floats(cout, 3);
  std::vector<float> y(cout * conv_output_grid(g, stride).size());
  for (auto _ : state) {
    if constexpr (Reference) {
      reference::conv3d_forward<float>(x, cin, g, w, b, cout, stride, y);
    } else {
      conv3d_forward<float>(x, cin, g, w, b, cout, stride, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Reference>
void BM_Conv3dBackward(benchmark::State& state) {
  const std::int64_t cin = state.range(0), cout = state.range(1), n = state.range(2);
  const int stride = static_cast<int>(state.range(3));
  const Grid3 g{n, n, n};
  const auto x = random_floats(cin * g.size(), 1);
  const auto w = random_floats(cout * cin * 27, 2);
  const auto dy = random_floats(cout * conv_output_grid(g, stride).size(), 3);
  std::vector<float> dx(x.size()), dw(w.size()), db(cout);
  for (auto _ : state) {
    std::fill(dx.begin(), dx.end(), 0.0f);
    std::fill(dw.begin(), dw.end(), 0.0f);
    std::fill(db.begin(), db.end(), 0.0f);
    if constexpr (Reference) {
      reference::conv3d_backward<float>(x, cin, g, w, cout, stride, dy, dx, dw, db);
    } else {
      conv3d_backward<float>(x, cin, g, w, cout, stride, dy, dx, dw, db);
    }
    benchmark::DoNotOptimize(dw.data());
  }
}

// Args: channels, spatial extent.
template <bool Reference>
void BM_WarpForward(benchmark::State& state) {
  const std::int64_t c = state.range(0), n = state.range(1);
  const Grid3 g{n, n, n};
  const auto src = random_floats(c * g.size(), 1);
  const auto field = random_floats(3 * g.size(), 2);
  std::vector<float> out(src.size());
  for (auto _ : state) {
    if constexpr (Reference) {
      reference::warp_forward<float>(src, c, g, field, out);
    } else {
      warp_forward<float>(src, c, g, field, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Reference>
void BM_WarpBackward(benchmark::State& state) {
  const std::int64_t c = state.range(0), n = state.range(1);
  const Grid3 g{n, n, n};
  const auto src = random_floats(c * g.size(), 1);
  const auto field = random_floats(3 * g.size(), 2);
  const auto dout = random_floats(src.size(), 3);
  std::vector<float> dsrc(src.size()), dfield(field.size());
  for (auto _ : state) {
    std::fill(dsrc.begin(), dsrc.end(), 0.0f);
    std::fill(dfield.begin(), dfield.end(), 0.0f);
    if constexpr (Reference) {
      reference::warp_backward<float>(src, c, g, field, dout, dsrc, dfield);
    } else {
      warp_backward<float>(src, c, g, field, dout, dsrc, dfield);
    }
    benchmark::DoNotOptimize(dfield.data());
  }
}

// Args: channels, spatial extent of the output (input is a quarter of it).
template <bool Reference>
void BM_ResampleForward(benchmark::State& state) {
  const std::int64_t c = state.range(0), n = state.range(1);
  const Grid3 in{n / 4, n / 4, n / 4}, out{n, n, n};
  const auto src = random_floats(c * in.size(), 1);
  std::vector<float> dst(c * out.size());
  for (auto _ : state) {
    if constexpr (Reference) {
      reference::resample_forward<float>(src, c, in, out, dst);
    } else {
      resample_forward<float>(src, c, in, out, dst);
    }
    benchmark::DoNotOptimize(dst.data());
  }
}

// Args: channels, spatial extent, radius.
template <bool Reference>
void BM_CorrelationForward(benchmark::State& state) {
  const std::int64_t c = state.range(0), n = state.range(1);
  const int r = static_cast<int>(state.range(2));
  const Grid3 g{n, n, n};
  const auto a = random_floats(c * g.size(), 1);
  const auto b = random_floats(c * g.size(), 2);
  const std::int64_t k = (2 * r + 1) * (2 * r + 1) * (2 * r + 1);
  std::vector<float> out(k * g.size());
  for (auto _ : state) {
    if constexpr (Reference) {
      reference::correlation_forward<float>(a, b, c, g, r, out);
    } else {
      correlation_forward<float>(a, b, c, g, r, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

// Args: spatial extent, radius.
template <bool Reference>
void BM_BoxSum(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  const int r = static_cast<int>(state.range(1));
  const Grid3 g{n, n, n};
  const auto f = random_floats(g.size(), 1);
  const std::vector<double> in(f.begin(), f.end());
  std::vector<double> out(in.size());
  for (auto _ : state) {
    if constexpr (Reference) {
      reference::box_sum(in, g, r, out);
    } else {
      box_sum(in, g, r, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

#define ODEREG_PAIR(fn, args)                              \
  BENCHMARK_TEMPLATE(fn, false)->Name(#fn "/parallel")->args; \
  BENCHMARK_TEMPLATE(fn, true)->Name(#fn "/reference")->args

ODEREG_PAIR(BM_Conv3dForward, Args({1, 16, 32, 2})->Args({16, 16, 16, 1})->Args({224, 64, 8, 1}));
ODEREG_PAIR(BM_Conv3dBackward, Args({16, 16, 16, 1})->Args({224, 64, 8, 1}));
ODEREG_PAIR(BM_WarpForward, Args({1, 32})->Args({32, 8}));
ODEREG_PAIR(BM_WarpBackward, Args({1, 32})->Args({32, 8}));
ODEREG_PAIR(BM_ResampleForward, Args({3, 32}));
ODEREG_PAIR(BM_CorrelationForward, Args({32, 8, 2})->Args({16, 16, 1}));
ODEREG_PAIR(BM_BoxSum, Args({32, 4}));

BENCHMARK_MAIN();
