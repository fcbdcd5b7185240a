#include <doctest.h>

#include <random>

#include "odereg/encoder.hpp"
#include "odereg/integrator.hpp"
#include "odereg/ops.hpp"
#include "odereg/synth.hpp"
#include "odereg/velocity.hpp"
#include "support/oracles.hpp"

using namespace odereg;

namespace {

std::vector<double> leaky(std::vector<double> v, double slope) {
  for (auto& x : v) x = x > 0 ? x : slope * x;
  return v;
}

std::vector<double> oracle_layer(const ConvLayer<double>& l, const std::vector<double>& x,
                                 Grid3 g) {
  return oracle::conv3d(x, l.in_channels(), g, l.weight.values(), l.bias.values(),
                        l.out_channels(), l.stride);
}

double sigmoid_d(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Tensor<double> random_image(Grid3 g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return Tensor<double>(Shape{1, g.n0, g.n1, g.n2}, oracle::random_vector(g.size(), rng, 0, 1));
}

void zero_layer(ConvLayer<double>& l) {
  auto w = l.weight.mutable_data();
  std::fill(w.begin(), w.end(), 0.0);
  auto b = l.bias.mutable_data();
  std::fill(b.begin(), b.end(), 0.0);
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("pyramid output shapes and parameter layout") {
  const auto params = ModelParams<float>::initialize(ArchitectureConfig{}, 1);
  const auto maps = feature_pyramid_forward(Tensor<float>::zeros(Shape{1, 32, 32, 32}), params);
  CHECK(maps.half_res.shape() == Shape{16, 16, 16, 16});
  CHECK(maps.quarter_res.shape() == Shape{32, 8, 8, 8});
  for (float v : maps.half_res.values()) CHECK(v == 0.0f);
  CHECK(params.gru.size() == 3);
  CHECK(params.gru[0].weight.shape() == Shape{32, 64, 3, 3, 3});
  CHECK(params.vn_quarter.front().in_channels() == 224);
  CHECK(params.vn_quarter.back().out_channels() == 3);
  CHECK(params.vn_half.empty());

  ArchitectureConfig two;
  two.levels = 2;
  const auto p2 = ModelParams<float>::initialize(two, 1);
  CHECK(p2.vn_half.at(0).in_channels() == 78);
  CHECK(p2.vn_half.at(1).in_channels() == 110);
  CHECK(p2.vn_half.at(2).out_channels() == 3);
}

TEST_CASE("pyramid rejects extents not divisible by 4") {
  const auto params = ModelParams<float>::initialize(ArchitectureConfig{}, 1);
  CHECK_THROWS_AS(feature_pyramid_forward(Tensor<float>::zeros(Shape{1, 32, 30, 32}), params),
                  ShapeError);
}

TEST_CASE("initialisation is deterministic in the seed") {
  const auto a = ModelParams<float>::initialize(ArchitectureConfig{}, 5);
  const auto b = ModelParams<float>::initialize(ArchitectureConfig{}, 5);
  const auto c = ModelParams<float>::initialize(ArchitectureConfig{}, 6);
  CHECK(a.pyramid[3].weight.values() == b.pyramid[3].weight.values());
  CHECK(a.pyramid[3].weight.values() != c.pyramid[3].weight.values());
}

TEST_CASE("pyramid matches a layer-by-layer oracle") {
  const auto params = ModelParams<double>::initialize(ArchitectureConfig{}, 2);
  const Grid3 g{8, 8, 8};
  const auto img = random_image(g, 3);
  const auto maps = feature_pyramid_forward(img, params);
  std::vector<double> x = img.values();
  Grid3 cur = g;
  for (std::size_t i = 0; i < 6; ++i) {
    x = leaky(oracle_layer(params.pyramid[i], x, cur), params.arch.leaky_slope);
    cur = kernels::conv_output_grid(cur, params.pyramid[i].stride);
    if (i == 2) CHECK(oracle::max_relative_error(maps.half_res.values(), x) < 1e-6);
  }
  CHECK(oracle::max_relative_error(maps.quarter_res.values(), x) < 1e-6);
}

TEST_CASE("convgru: zero weights keep a zero hidden state") {
  auto params = ModelParams<double>::initialize(ArchitectureConfig{}, 4);
  for (auto& l : params.gru) zero_layer(l);
  std::mt19937_64 rng(5);
  const Tensor<double> f(Shape{32, 2, 2, 2}, oracle::random_vector(256, rng));
  const auto h = convgru_step(f, TemporalContext<double>::zeros({2, 2, 2}), params);
  CHECK(h.hidden.shape() == Shape{32, 2, 2, 2});
  CHECK(max_abs(h.hidden.values()) == 0.0);
}

TEST_CASE("convgru matches a gate-by-gate oracle") {
  const auto params = ModelParams<double>::initialize(ArchitectureConfig{}, 6);
  std::mt19937_64 rng(7);
  const Grid3 q{2, 3, 2};
  const auto f = oracle::random_vector(32 * q.size(), rng);
  const auto h = oracle::random_vector(32 * q.size(), rng);
  const auto got = convgru_step(Tensor<double>(Shape{32, 2, 3, 2}, f),
                                TemporalContext<double>{Tensor<double>(Shape{32, 2, 3, 2}, h)},
                                params);
  std::vector<double> fh = f;
  fh.insert(fh.end(), h.begin(), h.end());
  auto z = oracle_layer(params.gru[0], fh, q);
  auto r = oracle_layer(params.gru[1], fh, q);
  for (auto& v : z) v = sigmoid_d(v);
  for (auto& v : r) v = sigmoid_d(v);
  std::vector<double> frh = f;
  for (std::size_t i = 0; i < h.size(); ++i) frh.push_back(r[i] * h[i]);
  auto c = oracle_layer(params.gru[2], frh, q);
  std::vector<double> expect(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    expect[i] = (1 - z[i]) * h[i] + z[i] * std::tanh(c[i]);
  }
  CHECK(oracle::max_relative_error(got.hidden.values(), expect) < 1e-6);
}

TEST_CASE("encode_sequence equals a manual loop and shares weights") {
  const auto params = ModelParams<double>::initialize(ArchitectureConfig{}, 8);
  const Grid3 g{8, 8, 8};
  std::vector<Tensor<double>> frames;
  for (int t = 0; t < 6; ++t) frames.push_back(random_image(g, 10 + t));
  const auto enc = encode_sequence(frames, params);
  CHECK(enc.features.size() == 6);
  auto h = TemporalContext<double>::zeros({2, 2, 2});
  for (int t = 0; t < 6; ++t) {
    const auto maps = feature_pyramid_forward(frames[t], params);
    CHECK(maps.quarter_res.values() == enc.features[t].quarter_res.values());
    h = convgru_step(maps.quarter_res, h, params);
  }
  CHECK(h.hidden.values() == enc.context.hidden.values());

  std::vector<Tensor<double>> swapped{frames[1], frames[0]};
  const auto a = encode_sequence<double>({frames[0], frames[1]}, params);
  const auto b = encode_sequence(swapped, params);
  CHECK(enc.features.size() == 6);
  CHECK(a.features[0].half_res.values() == b.features[1].half_res.values());
  CHECK(a.features[1].quarter_res.values() == b.features[0].quarter_res.values());

  CHECK_THROWS_AS(encode_sequence<double>({frames[0]}, params), ContractError);
}

TEST_CASE("NoGRU context is the reference quarter features") {
  ArchitectureConfig arch;
  arch.use_gru = false;
  const auto params = ModelParams<double>::initialize(arch, 9);
  const auto enc = encode_sequence<double>({random_image({8, 8, 8}, 1), random_image({8, 8, 8}, 2)},
                                           params);
  CHECK(enc.context.hidden.values() == enc.features[0].quarter_res.values());
}

}  // TEST_SUITE

TEST_SUITE("velocity") {

TEST_CASE("cost volume: cardinality, constant maps, oracle, symmetry") {
  std::mt19937_64 rng(20);
  const Grid3 g{4, 4, 4};
  const Tensor<double> a(Shape{2, 4, 4, 4}, oracle::random_vector(128, rng));
  const Tensor<double> b(Shape{2, 4, 4, 4}, oracle::random_vector(128, rng));
  CHECK(local_cost_volume(a, b, 1).dim(0) == 27);
  CHECK(local_cost_volume(a, b, 2).dim(0) == 125);

  const auto c = Tensor<double>::full(Shape{2, 4, 4, 4}, 0.7);
  CHECK(max_abs(local_cost_volume(c, c, 1).values()) < 1e-12);

  const auto cv = local_cost_volume(a, b, 1);
  CHECK(oracle::max_relative_error(cv.values(), oracle::cost_volume(a.values(), b.values(), 2, g, 1)) <
        1e-6);

  const auto swapped = local_cost_volume(b, a, 1);
  const std::int64_t n = g.size();
  int checked = 0;
  for (int k = 0; k < 27; ++k) {
    const int s0 = k / 9 - 1, s1 = (k / 3) % 3 - 1, s2 = k % 3 - 1;
    const int kneg = 26 - k;
    for (std::int64_t i = 0; i < 4; ++i)
      for (std::int64_t j = 0; j < 4; ++j)
        for (std::int64_t l = 0; l < 4; ++l) {
          if (!oracle::inside(g, i + s0, j + s1, l + s2)) continue;
          const double x = cv.values()[k * n + g.index(i, j, l)];
          const double y = swapped.values()[kneg * n + g.index(i + s0, j + s1, l + s2)];
          CHECK(x == doctest::Approx(y).epsilon(1e-12));
          ++checked;
        }
  }
  CHECK(checked > 0);
}

TEST_CASE("compose_and_scale examples") {
  std::mt19937_64 rng(21);
  const Shape s{3, 4, 4, 4};
  const Tensor<double> v(s, oracle::random_vector(192, rng));
  const auto zero = Tensor<double>::zeros(s);
  CHECK(compose_and_scale(v, zero, 0.0, 1.0).values() == v.values());
  CHECK(max_abs(compose_and_scale(zero, Tensor<double>(s, oracle::random_vector(192, rng)), 0.2, 1.0)
                    .values()) == 0.0);
  const auto out = compose_and_scale(Tensor<double>::full(s, 0.3), Tensor<double>::full(s, 1.5),
                                     0.5, 1.0);
  for (double x : out.values()) CHECK(x == doctest::Approx(0.6));
  CHECK_THROWS_AS(compose_and_scale(v, zero, 1.0, 1.0), ContractError);
}

TEST_CASE("freshly initialised network predicts small velocities") {
  for (int levels : {1, 2}) {
    ArchitectureConfig arch;
    arch.levels = levels;
    for (std::uint64_t seed : {1, 2, 3}) {
      const auto params = ModelParams<float>::initialize(arch, seed);
      const Volume f = make_phantom({32, 32, 32}, seed);
      const Volume m = make_phantom({32, 32, 32}, seed + 10);
      const auto enc = encode_sequence<float>({f, m}, params);
      const Grid3 fg = field_grid({32, 32, 32}, arch);
      RegistrationState<float> st{enc.features[0], enc.features[1], enc.context.hidden,
                                  Tensor<float>::zeros(Shape{3, fg.n0, fg.n1, fg.n2}), 0.0, 1.0};
      const auto v = estimate_velocity(st, params);
      double m_abs = 0.0;
      for (float x : v.values()) m_abs = std::max(m_abs, std::abs(double(x)));
      CAPTURE(levels);
      CHECK(m_abs <= 0.1);
    }
  }
}

TEST_CASE("zero final layer freezes phi") {
  auto params = ModelParams<double>::initialize(ArchitectureConfig{}, 22);
  zero_layer(params.vn_quarter.back());
  const auto enc = encode_sequence<double>({random_image({8, 8, 8}, 1), random_image({8, 8, 8}, 2)},
                                           params);
  std::mt19937_64 rng(23);
  RegistrationState<double> st{enc.features[0], enc.features[1], enc.context.hidden,
                               Tensor<double>(Shape{3, 2, 2, 2}, oracle::random_vector(24, rng, -0.5, 0.5)),
                               0.3, 1.0};
  CHECK(max_abs(estimate_velocity(st, params).values()) == 0.0);
}

TEST_CASE("two-level pass equals a hand-rolled sequence of ops") {
  ArchitectureConfig arch;
  arch.levels = 2;
  const auto params = ModelParams<double>::initialize(arch, 24);
  const auto enc = encode_sequence<double>(
      {random_image({16, 16, 16}, 3), random_image({16, 16, 16}, 4)}, params);
  std::mt19937_64 rng(25);
  const Tensor<double> phi(Shape{3, 8, 8, 8}, oracle::random_vector(1536, rng, -0.6, 0.6));
  RegistrationState<double> st{enc.features[0], enc.features[1], enc.context.hidden, phi, 0.0, 1.0};
  const auto got = predict_vector_field(st, params);

  const double slope = arch.leaky_slope;
  auto dense = [&](const std::vector<ConvLayer<double>>& layers, const Tensor<double>& in) {
    std::vector<Tensor<double>> feats{in};
    Tensor<double> last;
    for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
      last = leaky_relu(conv3d(concat_channels(feats), layers[i].weight, layers[i].bias, 1), slope);
      feats.push_back(last);
    }
    return std::pair{conv3d(last, layers.back().weight, layers.back().bias, 1), last};
  };
  const auto& F = enc.features;
  const auto phi_q = resample(phi, {4, 4, 4}, true);
  const auto wq = grid_warp(F[1].quarter_res, phi_q);
  const auto in_q = concat_channels<double>(
      {local_cost_volume(wq, F[0].quarter_res, 2), phi_q, F[0].quarter_res, enc.context.hidden, wq});
  const auto [vq, cq] = dense(params.vn_quarter, in_q);
  const auto v_up = resample(vq, {8, 8, 8}, true);
  const auto phi_p = add(grid_warp(phi, v_up), v_up);
  const auto wh = grid_warp(F[1].half_res, phi_p);
  const auto in_h = concat_channels<double>({local_cost_volume(wh, F[0].half_res, 1), phi_p,
                                             F[0].half_res, resample(cq, {8, 8, 8}, false), wh});
  const auto expect = add(v_up, dense(params.vn_half, in_h).first);
  CHECK(oracle::max_relative_error(got.values(), expect.values()) < 1e-12);
}

TEST_CASE("NoCorrV network omits the cost volume channels") {
  ArchitectureConfig arch;
  arch.use_cost_volume = false;
  CHECK(arch.quarter_input_channels() == 99);
  arch.levels = 2;
  CHECK(arch.half_input_channels() == 51);
}

}  // TEST_SUITE
