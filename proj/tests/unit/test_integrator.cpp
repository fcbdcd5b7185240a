#include <doctest.h>

#include <cmath>
#include <random>

#include "odereg/integrator.hpp"
#include "odereg/ops.hpp"
#include "odereg/synth.hpp"
#include "support/oracles.hpp"

using namespace odereg;

namespace {

Tensor<double> random_image(Grid3 g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return Tensor<double>(Shape{1, g.n0, g.n1, g.n2}, oracle::random_vector(g.size(), rng, 0, 1));
}

double exp_error(double h) {
  const VelocityFn<double> f = [](const Tensor<double>& phi, double) { return phi; };
  const auto r = euler_integrate(f, Tensor<double>::full(Shape{1}, 1.0), 0.0, 1.0, h);
  return std::abs(r.phi.item() - std::exp(1.0));
}

template <class P>
void zero_final_layers(P& params) {
  for (auto* layers : {&params.vn_quarter, &params.vn_half}) {
    if (layers->empty()) continue;
    auto w = layers->back().weight.mutable_data();
    std::fill(w.begin(), w.end(), 0);
    auto b = layers->back().bias.mutable_data();
    std::fill(b.begin(), b.end(), 0);
  }
}

}  // namespace

TEST_SUITE("integrator") {

TEST_CASE("Euler: constant velocity integrates exactly") {
  const VelocityFn<double> f = [](const Tensor<double>&, double) {
    return Tensor<double>::full(Shape{3}, 0.7);
  };
  for (double h : {1.0, 0.5, 0.25, 0.2, 0.1}) {
    const auto r = euler_integrate(f, Tensor<double>::zeros(Shape{3}), 0.0, 1.0, h);
    for (double v : r.phi.values()) CHECK(v == doctest::Approx(0.7).epsilon(1e-12));
  }
}

TEST_CASE("Euler: exponential growth recurrence and first order") {
  const VelocityFn<double> f = [](const Tensor<double>& phi, double) { return phi; };
  const auto r = euler_integrate(f, Tensor<double>::full(Shape{3}, 1.0), 0.0, 1.0, 0.25, true);
  for (double v : r.phi.values()) CHECK(v == doctest::Approx(2.44140625).epsilon(1e-14));
  CHECK(r.intermediates.size() == 4);
  for (double h : {0.25, 0.125}) {
    const double ratio = exp_error(h) / exp_error(h / 2);
    CHECK(ratio >= 1.8);
    CHECK(ratio <= 2.2);
  }
}

TEST_CASE("Euler: one step vs two half steps differ at second order") {
  const VelocityFn<double> f = [](const Tensor<double>& phi, double t) {
    return add(scale(phi, std::sin(t)), Tensor<double>::full(Shape{2}, 0.5));
  };
  std::vector<double> gaps;
  for (double h : {0.2, 0.1, 0.05}) {
    const auto one = euler_integrate(f, Tensor<double>::full(Shape{2}, 0.3), 0.4, 0.4 + h, h);
    const auto two = euler_integrate(f, Tensor<double>::full(Shape{2}, 0.3), 0.4, 0.4 + h, h / 2);
    gaps.push_back(std::abs(one.phi.values()[0] - two.phi.values()[0]));
  }
  for (std::size_t i = 0; i + 1 < gaps.size(); ++i) {
    CHECK(gaps[i] / gaps[i + 1] == doctest::Approx(4.0).epsilon(0.15));
  }
}

TEST_CASE("Euler: rejects bad step sizes and non-finite velocities") {
  const VelocityFn<double> f = [](const Tensor<double>& phi, double) { return phi; };
  const auto x = Tensor<double>::full(Shape{1}, 1.0);
  CHECK_THROWS_AS(euler_integrate(f, x, 0.0, 1.0, 0.3), ContractError);
  CHECK_THROWS_AS(euler_integrate(f, x, 0.0, 1.0, 0.0), ContractError);
  CHECK_THROWS_AS(euler_integrate(f, x, 1.0, 1.0, 0.5), ContractError);
  const VelocityFn<double> bad = [](const Tensor<double>&, double t) {
    return Tensor<double>::full(Shape{1}, t > 0.3 ? std::nan("") : 1.0);
  };
  CHECK_THROWS_WITH_AS(euler_integrate(bad, x, 0.0, 1.0, 0.25), doctest::Contains("step 2"),
                       NumericError);
}

TEST_CASE("group-wise plan covers every phase exactly once") {
  const auto plan = make_groupwise_plan(6, 0.5);
  plan.validate(6);
  CHECK(plan.paths.size() == 2);
  CHECK(plan.paths[0] == std::vector<int>{0, 1, 2, 3});
  CHECK(plan.paths[1] == std::vector<int>{0, 5, 4, 3});
  std::vector<int> sorted = plan.checkpoints;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5});
  const auto pair = make_pairwise_plan(0.1);
  CHECK(pair.paths == std::vector<std::vector<int>>{{0, 1}});
  CHECK_THROWS_AS(make_groupwise_plan(6, 1.5).validate(6), ConfigError);
  CHECK_THROWS_AS(make_groupwise_plan(6, 0.5).validate(4), ContractError);
}

TEST_CASE("zero velocity network: every phi is zero and warps are identities") {
  auto params = ModelParams<float>::initialize(ArchitectureConfig{}, 1);
  zero_final_layers(params);
  const Volume ph = make_phantom({16, 16, 16}, 2);
  const auto seq = generate_sequence(ph, MotionModel::random({16, 16, 16}, 6, 3), 6, 8, 4);
  const auto traj = register_groupwise(seq.frames, params, make_groupwise_plan(6, 0.5));
  CHECK(traj.fields_by_phase.size() == 6);
  for (const auto& [t, phi] : traj.fields_by_phase) {
    for (float v : phi.vectors) CHECK(v == 0.0f);
    CHECK(warp_volume(seq.frames[t], phi).intensities == seq.frames[t].intensities);
  }
  const auto p = register_pairwise(seq.frames[0], seq.frames[0], params, make_pairwise_plan(0.1));
  for (float v : p.vectors) CHECK(v == 0.0f);
}

TEST_CASE("phase 0 of a trained-like trajectory is exactly zero") {
  const auto params = ModelParams<float>::initialize(ArchitectureConfig{}, 5);
  const Volume ph = make_phantom({16, 16, 16}, 6);
  const auto seq = generate_sequence(ph, MotionModel::random({16, 16, 16}, 6, 7), 6, 8, 8);
  const auto traj = register_groupwise(seq.frames, params, make_groupwise_plan(6, 0.5));
  for (float v : traj.fields_by_phase.at(0).vectors) CHECK(v == 0.0f);
  bool any_nonzero = false;
  for (float v : traj.fields_by_phase.at(3).vectors) any_nonzero |= v != 0.0f;
  CHECK(any_nonzero);
}

TEST_CASE("single-phase integration matches the full plan") {
  const auto params = ModelParams<double>::initialize(ArchitectureConfig{}, 9);
  std::vector<Tensor<double>> frames;
  for (int t = 0; t < 6; ++t) frames.push_back(random_image({8, 8, 8}, 20 + t));
  const auto enc = encode_sequence(frames, params);
  const auto plan = make_groupwise_plan(6, 0.5);
  const auto all = integrate_plan(enc, params, plan);
  for (int t : {2, 4}) {
    const auto one = integrate_plan(enc, params, plan, t);
    CHECK(one.fields.size() >= 1);
    CHECK(one.fields.at(t).values() == all.fields.at(t).values());
  }
}

TEST_CASE("ORRN at h = 1 equals dRRN with one recursion") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto params = ModelParams<double>::initialize(ArchitectureConfig{}, 30 + seed);
    const auto f = random_image({8, 8, 8}, 40 + seed), m = random_image({8, 8, 8}, 50 + seed);
    const auto a = register_pairwise(f, m, params, 1.0);
    const auto b = drrn_register(f, m, params, 1);
    CHECK(oracle::max_relative_error(a.values(), b.values(), 1e-300) <= 1e-12);
  }
}

TEST_CASE("dRRN with two recursions equals a manual predict-compose sequence") {
  const auto params = ModelParams<double>::initialize(ArchitectureConfig{}, 60);
  const auto f = random_image({8, 8, 8}, 61), m = random_image({8, 8, 8}, 62);
  const auto enc = encode_sequence<double>({f, m}, params);
  Tensor<double> phi = Tensor<double>::zeros(Shape{3, 2, 2, 2});
  for (int r = 0; r < 2; ++r) {
    RegistrationState<double> st{enc.features[0], enc.features[1], enc.context.hidden, phi, 0.0, 1.0};
    phi = compose(phi, predict_vector_field(st, params));
  }
  CHECK(oracle::max_relative_error(drrn_register(f, m, params, 2).values(), phi.values()) < 1e-12);
  CHECK_THROWS_AS(drrn_register(f, m, params, 0), ContractError);
}

}  // TEST_SUITE
