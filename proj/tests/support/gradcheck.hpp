#pragma once

// Central finite-difference gradient checks in double precision.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "odereg/ops.hpp"
#include "odereg/tensor.hpp"

namespace gradcheck {

using odereg::Tensor;
using Inputs = std::vector<Tensor<double>>;
using Function = std::function<Tensor<double>(const Inputs&)>;

struct Result {
  double worst = 0.0;     // max |analytic - numeric| / max(1, |numeric|)
  std::size_t checked = 0;
};

// The scalar objective is sum(f(inputs) * W) with a fixed random W, so every
// output element contributes with a distinct weight. At most
// `max_entries_per_input` randomly chosen entries of each input are probed.
inline Result check(const Function& f, Inputs inputs, std::uint64_t seed,
                    std::size_t max_entries_per_input = 1u << 30, double step = 1e-5) {
  std::mt19937_64 rng(seed);
  Tensor<double> weights;
  auto objective = [&](const Inputs& in) {
    const Tensor<double> out = f(in);
    if (!weights.defined()) {
      std::uniform_real_distribution<double> d(-1.0, 1.0);
      std::vector<double> w(static_cast<std::size_t>(out.numel()));
      for (auto& v : w) v = d(rng);
      weights = Tensor<double>(out.shape(), std::move(w));
    }
    return odereg::sum(odereg::mul(out, weights));
  };

  for (auto& t : inputs) {
    t = Tensor<double>(t.shape(), t.values(), true);
  }
  odereg::backward(objective(inputs));
  std::vector<std::vector<double>> analytic;
  for (const auto& t : inputs) analytic.push_back(t.grad_or_zeros());

  Result r;
  odereg::NoGradGuard no_grad;
  for (std::size_t a = 0; a < inputs.size(); ++a) {
    const std::size_t n = static_cast<std::size_t>(inputs[a].numel());
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    if (n > max_entries_per_input) {
      std::shuffle(order.begin(), order.end(), rng);
      order.resize(max_entries_per_input);
    }
    for (std::size_t idx : order) {
      auto data = inputs[a].mutable_data();
      const double orig = data[idx];
      data[idx] = orig + step;
      const double up = objective(inputs).item();
      data[idx] = orig - step;
      const double down = objective(inputs).item();
      data[idx] = orig;
      const double numeric = (up - down) / (2.0 * step);
      r.worst = std::max(r.worst, std::abs(analytic[a][idx] - numeric) /
                                      std::max(1.0, std::abs(numeric)));
      ++r.checked;
    }
  }
  return r;
}

inline Tensor<double> random_tensor(odereg::Shape shape, std::mt19937_64& rng,
                                    double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(odereg::shape_numel(shape)));
  for (auto& x : v) x = d(rng);
  return Tensor<double>(std::move(shape), std::move(v));
}

// Values with |x| in [0.05, 1] so a kink at zero is never straddled.
inline Tensor<double> away_from_zero(odereg::Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(0.05, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> v(static_cast<std::size_t>(odereg::shape_numel(shape)));
  for (auto& x : v) x = sign(rng) ? mag(rng) : -mag(rng);
  return Tensor<double>(std::move(shape), std::move(v));
}

// Displacements whose fractional part stays in [0.1, 0.9], so sample
// positions never sit on a grid line.
inline Tensor<double> fractional_field(odereg::Shape shape, std::mt19937_64& rng,
                                       int max_whole = 1) {
  std::uniform_real_distribution<double> frac(0.1, 0.9);
  std::uniform_int_distribution<int> whole(-max_whole, max_whole - 1);
  std::vector<double> v(static_cast<std::size_t>(odereg::shape_numel(shape)));
  for (auto& x : v) x = whole(rng) + frac(rng);
  return Tensor<double>(std::move(shape), std::move(v));
}

}  // namespace gradcheck
