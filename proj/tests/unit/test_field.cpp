#include <doctest.h>

#include <random>

#include "odereg/field.hpp"
#include "odereg/ops.hpp"
#include "odereg/synth.hpp"
#include "support/oracles.hpp"

using namespace odereg;

namespace {

std::vector<double> to_double(std::span<const float> v) { return {v.begin(), v.end()}; }

// Smooth field: a few low-frequency cosines per component.
DisplacementField smooth_field(Grid3 g, double amplitude, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DisplacementField f = DisplacementField::zeros(g);
  const std::int64_t n = g.size();
  for (int c = 0; c < 3; ++c) {
    const double k0 = u(rng), k1 = u(rng), k2 = u(rng), ph = 6.28 * u(rng);
    for (std::int64_t i = 0; i < g.n0; ++i)
      for (std::int64_t j = 0; j < g.n1; ++j)
        for (std::int64_t k = 0; k < g.n2; ++k) {
          const double arg = 6.28 * (k0 * i / g.n0 + k1 * j / g.n1 + k2 * k / g.n2) + ph;
          f.vectors[c * n + g.index(i, j, k)] = static_cast<float>(amplitude * std::cos(arg));
        }
  }
  return f;
}

}  // namespace

TEST_SUITE("field") {

TEST_CASE("grid_warp: zero field is the identity") {
  std::mt19937_64 rng(1);
  const Grid3 g{4, 5, 6};
  const Tensor<double> x(Shape{2, 4, 5, 6}, oracle::random_vector(2 * g.size(), rng));
  const auto y = grid_warp(x, Tensor<double>::zeros(Shape{3, 4, 5, 6}));
  CHECK(oracle::max_relative_error(y.values(), x.values()) == 0.0);
}

TEST_CASE("grid_warp: linear ramp under a unit shift") {
  const Grid3 g{6, 5, 4};
  std::vector<double> ramp(g.size()), field(3 * g.size(), 0.0);
  for (std::int64_t i = 0; i < g.n0; ++i)
    for (std::int64_t j = 0; j < g.n1; ++j)
      for (std::int64_t k = 0; k < g.n2; ++k) ramp[g.index(i, j, k)] = static_cast<double>(i);
  for (std::int64_t p = 0; p < g.size(); ++p) field[p] = 1.0;
  const auto y = grid_warp(Tensor<double>(Shape{1, 6, 5, 4}, ramp),
                           Tensor<double>(Shape{3, 6, 5, 4}, field));
  for (std::int64_t i = 0; i + 1 < g.n0; ++i) {
    CHECK(y.values()[g.index(i, 2, 2)] == doctest::Approx(i + 1.0));
  }
}

TEST_CASE("grid_warp matches the pointwise trilinear oracle") {
  const Grid3 g{4, 4, 4};
  const DisplacementField f = smooth_field(g, 1.3, 2);
  std::mt19937_64 rng(3);
  const auto src = oracle::random_vector(g.size(), rng);
  const auto y = grid_warp(Tensor<double>(Shape{1, 4, 4, 4}, src), f.as_tensor<double>());
  CHECK(oracle::max_relative_error(y.values(), oracle::warp(src, 1, g, to_double(f.vectors))) <
        1e-6);
}

TEST_CASE("resample: identical extents is the identity") {
  std::mt19937_64 rng(4);
  const Tensor<double> x(Shape{2, 3, 4, 5}, oracle::random_vector(120, rng));
  CHECK(oracle::max_relative_error(resample(x, {3, 4, 5}, false).values(), x.values()) == 0.0);
}

TEST_CASE("resample: constant unit field doubles when upsampled in vector mode") {
  const auto up = resample(Tensor<double>::full(Shape{3, 8, 8, 8}, 1.0), {16, 16, 16}, true);
  for (double v : up.values()) CHECK(v == doctest::Approx(2.0));
}

TEST_CASE("resample: down then up matches the oracle") {
  std::mt19937_64 rng(5);
  const Grid3 g{8, 8, 8}, coarse{4, 4, 4};
  const auto src = oracle::random_vector(3 * g.size(), rng);
  const auto down = resample(Tensor<double>(Shape{3, 8, 8, 8}, src), coarse, true);
  const auto up = resample(down, g, true);
  const auto o_down = oracle::resample(src, 3, g, coarse, true);
  const auto o_up = oracle::resample(o_down, 3, coarse, g, true);
  CHECK(oracle::max_relative_error(up.values(), o_up) < 1e-6);
}

TEST_CASE("displace_points: zero and constant fields") {
  const Grid3 g{8, 8, 8};
  LandmarkSet pts{{{1.0, 2.0, 3.0}, {4.5, 0.25, 7.0}}, 0};
  const auto same = displace_points(pts, DisplacementField::zeros(g));
  CHECK(same.points == pts.points);

  DisplacementField c = DisplacementField::zeros(g);
  for (int a = 0; a < 3; ++a)
    std::fill_n(c.vectors.begin() + a * g.size(), g.size(), static_cast<float>(a + 1));
  const auto moved = displace_points(pts, c);
  for (std::size_t i = 0; i < pts.points.size(); ++i)
    for (int a = 0; a < 3; ++a)
      CHECK(moved.points[i][a] == doctest::Approx(pts.points[i][a] + a + 1));
}

TEST_CASE("displace_points: fractional point in a linear field") {
  const Grid3 g{8, 8, 8};
  const double alpha = 0.1;
  DisplacementField f = DisplacementField::zeros(g);
  for (std::int64_t i = 0; i < g.n0; ++i)
    for (std::int64_t j = 0; j < g.n1; ++j)
      for (std::int64_t k = 0; k < g.n2; ++k) {
        const std::int64_t p = g.index(i, j, k);
        f.vectors[p] = static_cast<float>(alpha * i);
        f.vectors[g.size() + p] = static_cast<float>(alpha * j);
        f.vectors[2 * g.size() + p] = static_cast<float>(alpha * k);
      }
  const LandmarkSet pts{{{2.3, 4.7, 5.5}}, 0};
  const auto moved = displace_points(pts, f);
  for (int a = 0; a < 3; ++a)
    CHECK(moved.points[0][a] == doctest::Approx((1 + alpha) * pts.points[0][a]).epsilon(1e-6));
}

TEST_CASE("displace_points rejects a point outside the grid") {
  const LandmarkSet pts{{{1.0, 1.0, 1.0}, {1.0, 8.5, 1.0}}, 0};
  CHECK_THROWS_WITH_AS(displace_points(pts, DisplacementField::zeros({8, 8, 8})),
                       doctest::Contains("landmark 1"), ContractError);
}

TEST_CASE("displace_points works from a coarse field") {
  DisplacementField coarse = DisplacementField::zeros({4, 4, 4}, 0.25);
  std::fill(coarse.vectors.begin(), coarse.vectors.end(), 0.5f);
  const auto moved = displace_points(LandmarkSet{{{3.0, 3.0, 3.0}}, 0}, coarse);
  for (int a = 0; a < 3; ++a) CHECK(moved.points[0][a] == doctest::Approx(5.0));
}

TEST_CASE("compose_fields: zero and constant cases") {
  const Grid3 g{5, 5, 5};
  const DisplacementField v = smooth_field(g, 0.7, 6), phi = smooth_field(g, 0.9, 7);
  const auto zero = DisplacementField::zeros(g);
  CHECK(compose_fields(zero, v).vectors == v.vectors);
  CHECK(compose_fields(phi, zero).vectors == phi.vectors);

  DisplacementField a = zero, b = zero;
  std::fill(a.vectors.begin(), a.vectors.end(), 0.3f);
  std::fill(b.vectors.begin(), b.vectors.end(), -1.2f);
  for (float x : compose_fields(a, b).vectors) CHECK(x == doctest::Approx(-0.9f));
}

TEST_CASE("compose: ramp field under a constant shift") {
  const Grid3 g{6, 6, 6};
  DisplacementField phi = DisplacementField::zeros(g), v = DisplacementField::zeros(g);
  for (std::int64_t i = 0; i < g.n0; ++i)
    for (std::int64_t j = 0; j < g.n1; ++j)
      for (std::int64_t k = 0; k < g.n2; ++k) phi.vectors[g.index(i, j, k)] = 0.1f * i;
  std::fill_n(v.vectors.begin(), g.size(), 1.0f);
  const auto out = compose_fields(phi, v);
  for (std::int64_t i = 1; i + 1 < g.n0; ++i) {
    CHECK(out.vectors[g.index(i, 3, 3)] == doctest::Approx(0.1 * (i + 1) + 1.0));
  }
}

TEST_CASE("sequential warps agree with the composed field") {
  const Grid3 g{32, 32, 32};
  const Volume vol = make_phantom(g, 9);
  const DisplacementField phi = smooth_field(g, 1.5, 10), small = smooth_field(g, 0.5, 11);
  const Volume twice = warp_volume(warp_volume(vol, phi), small);
  const Volume once = warp_volume(vol, compose_fields(phi, small));
  double err = 0.0;
  std::int64_t count = 0;
  for (std::int64_t i = 4; i < 28; ++i)
    for (std::int64_t j = 4; j < 28; ++j)
      for (std::int64_t k = 4; k < 28; ++k) {
        err += std::abs(twice.at(i, j, k) - once.at(i, j, k));
        ++count;
      }
  CHECK(err / count < 1e-2);
}

TEST_CASE("jacobian_determinant: zero field, dilation, and oracle") {
  const Grid3 g{5, 6, 7};
  for (double d : jacobian_determinant(DisplacementField::zeros(g))) CHECK(d == 1.0);

  DisplacementField dil = DisplacementField::zeros(g);
  for (std::int64_t i = 0; i < g.n0; ++i)
    for (std::int64_t j = 0; j < g.n1; ++j)
      for (std::int64_t k = 0; k < g.n2; ++k) {
        const std::int64_t p = g.index(i, j, k);
        dil.vectors[p] = 0.1f * i;
        dil.vectors[g.size() + p] = 0.1f * j;
        dil.vectors[2 * g.size() + p] = 0.1f * k;
      }
  const auto det = jacobian_determinant(dil);
  CHECK(det[g.index(2, 3, 3)] == doctest::Approx(1.331).epsilon(1e-6));

  const DisplacementField f = smooth_field(g, 0.8, 12);
  CHECK(oracle::max_relative_error(jacobian_determinant(f),
                                   oracle::jacobian(to_double(f.vectors), g)) < 1e-6);
  CHECK_THROWS_AS(jacobian_determinant(DisplacementField::zeros({2, 5, 5})), ContractError);
}

TEST_CASE("jacobian_stats: identity, one fold, and a direct oracle") {
  std::vector<double> ones(100, 1.0);
  const auto id = jacobian_stats(ones);
  CHECK(id.std_dev == 0.0);
  CHECK(id.neg_fraction == 0.0);

  ones[17] = -0.5;
  CHECK(jacobian_stats(ones).neg_fraction == doctest::Approx(0.01));

  std::mt19937_64 rng(13);
  const auto det = oracle::random_vector(500, rng, -0.2, 2.0);
  double mu = 0.0;
  int neg = 0;
  for (double d : det) {
    mu += d;
    neg += d < 0;
  }
  mu /= 500;
  double ss = 0.0;
  for (double d : det) ss += (d - mu) * (d - mu);
  const auto st = jacobian_stats(det);
  CHECK(st.std_dev == doctest::Approx(std::sqrt(ss / 500)));
  CHECK(st.neg_fraction == doctest::Approx(neg / 500.0));

  std::vector<std::uint8_t> mask(500, 0);
  mask[3] = mask[4] = 1;
  const auto masked = jacobian_stats(det, std::span<const std::uint8_t>(mask));
  CHECK(masked.voxels == 2);
  CHECK(masked.std_dev == doctest::Approx(std::abs(det[3] - det[4]) / 2));
}

}  // TEST_SUITE
