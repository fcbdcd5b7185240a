#include "odereg/model.hpp"

#include <cmath>
#include <random>

#include "odereg/errors.hpp"
#include "odereg/ops.hpp"

namespace odereg {

void ArchitectureConfig::validate() const {
  if (levels != 1 && levels != 2) {
    throw ConfigError("model levels must be 1 or 2, got " + std::to_string(levels));
  }
  if (radius_quarter < 1 || radius_half < 1) {
    throw ConfigError("cost-volume radii must be >= 1");
  }
  if (leaky_slope < 0.0 || leaky_slope >= 1.0) {
    throw ConfigError("leaky slope must be in [0, 1)");
  }
  if (final_layer_scale < 0.0) throw ConfigError("final layer scale must be >= 0");
}

namespace {
std::int64_t cube(std::int64_t r) { return (2 * r + 1) * (2 * r + 1) * (2 * r + 1); }
}  // namespace

std::int64_t ArchitectureConfig::quarter_input_channels() const {
  return (use_cost_volume ? cube(radius_quarter) : 0) + 3 + kQuarterChannels +
         kHiddenChannels + kQuarterChannels;
}

std::int64_t ArchitectureConfig::half_input_channels() const {
  return (use_cost_volume ? cube(radius_half) : 0) + 3 + kHalfChannels +
         kContextHalfChannels + kHalfChannels;
}

template <class T>
Tensor<T> ConvLayer<T>::operator()(const Tensor<T>& x) const {
  return conv3d(x, weight, bias, stride);
}

namespace {

enum class InitKind { Leaky, Linear };

template <class T>
ConvLayer<T> make_layer(std::string name, std::int64_t cin, std::int64_t cout,
                        int stride, InitKind kind, double extra_scale,
                        double slope, std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(cin * 27);
  const double gain = kind == InitKind::Leaky ? 6.0 / (1.0 + slope * slope) : 3.0;
  const double bound = std::sqrt(gain / fan_in) * extra_scale;
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> w(static_cast<std::size_t>(cout * cin * 27));
  for (auto& v : w) v = static_cast<T>(dist(rng));
  ConvLayer<T> layer;
  layer.name = std::move(name);
  layer.weight = Tensor<T>(Shape{cout, cin, 3, 3, 3}, std::move(w), true);
  layer.bias = Tensor<T>::zeros(Shape{cout}, true);
  layer.stride = stride;
  return layer;
}

}  // namespace

template <class T>
ModelParams<T> ModelParams<T>::initialize(const ArchitectureConfig& arch,
                                          std::uint64_t seed) {
  arch.validate();
  std::mt19937_64 rng(seed);
  const double s = arch.leaky_slope;
  ModelParams m;
  m.arch = arch;
  const auto leaky = InitKind::Leaky;
  m.pyramid.push_back(make_layer<T>("pyramid.1", 1, 16, 2, leaky, 1.0, s, rng));
  m.pyramid.push_back(make_layer<T>("pyramid.2", 16, 16, 1, leaky, 1.0, s, rng));
  m.pyramid.push_back(make_layer<T>("pyramid.3", 16, 16, 1, leaky, 1.0, s, rng));
  m.pyramid.push_back(make_layer<T>("pyramid.4", 16, 32, 2, leaky, 1.0, s, rng));
  m.pyramid.push_back(make_layer<T>("pyramid.5", 32, 32, 1, leaky, 1.0, s, rng));
  m.pyramid.push_back(make_layer<T>("pyramid.6", 32, 32, 1, leaky, 1.0, s, rng));

  const std::int64_t gru_in = kQuarterChannels + kHiddenChannels;
  for (const char* gate : {"gru.update", "gru.reset", "gru.candidate"}) {
    m.gru.push_back(make_layer<T>(gate, gru_in, kHiddenChannels, 1,
                                  InitKind::Linear, 1.0, s, rng));
  }

  const std::int64_t q_in = arch.quarter_input_channels();
  const std::int64_t q_out[4] = {64, 48, 32, 16};
  std::int64_t width = q_in;
  for (int i = 0; i < 4; ++i) {
    m.vn_quarter.push_back(make_layer<T>("vn_quarter." + std::to_string(10 + i),
                                         width, q_out[i], 1, leaky, 1.0, s, rng));
    width += q_out[i];
  }
  m.vn_quarter.push_back(make_layer<T>("vn_quarter.14", 16, 3, 1, InitKind::Linear,
                                       arch.final_layer_scale, s, rng));

  if (arch.levels == 2) {
    const std::int64_t h_in = arch.half_input_channels();
    m.vn_half.push_back(make_layer<T>("vn_half.15", h_in, 32, 1, leaky, 1.0, s, rng));
    m.vn_half.push_back(
        make_layer<T>("vn_half.16", h_in + 32, 16, 1, leaky, 1.0, s, rng));
    m.vn_half.push_back(make_layer<T>("vn_half.17", 16, 3, 1, InitKind::Linear,
                                      arch.final_layer_scale, s, rng));
  }
  return m;
}

template <class T>
std::vector<ConvLayer<T>*> ModelParams<T>::layers() {
  std::vector<ConvLayer<T>*> out;
  for (auto* group : {&pyramid, &gru, &vn_quarter, &vn_half})
    for (auto& l : *group) out.push_back(&l);
  return out;
}

template <class T>
std::vector<const ConvLayer<T>*> ModelParams<T>::layers() const {
  std::vector<const ConvLayer<T>*> out;
  for (const auto* group : {&pyramid, &gru, &vn_quarter, &vn_half})
    for (const auto& l : *group) out.push_back(&l);
  return out;
}

template <class T>
std::vector<Tensor<T>> ModelParams<T>::parameters() const {
  std::vector<Tensor<T>> out;
  for (const auto* l : layers()) {
    out.push_back(l->weight);
    out.push_back(l->bias);
  }
  return out;
}

template <class T>
std::int64_t ModelParams<T>::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : parameters()) n += p.numel();
  return n;
}

template <class T>
template <class U>
ModelParams<U> ModelParams<T>::cast() const {
  auto convert = [](const std::vector<ConvLayer<T>>& src) {
    std::vector<ConvLayer<U>> dst;
    for (const auto& l : src) {
      ConvLayer<U> c;
      c.name = l.name;
      c.stride = l.stride;
      c.weight = Tensor<U>(l.weight.shape(),
                           std::vector<U>(l.weight.data().begin(), l.weight.data().end()),
                           true);
      c.bias = Tensor<U>(l.bias.shape(),
                         std::vector<U>(l.bias.data().begin(), l.bias.data().end()), true);
      dst.push_back(std::move(c));
    }
    return dst;
  };
  ModelParams<U> out;
  out.arch = arch;
  out.pyramid = convert(pyramid);
  out.gru = convert(gru);
  out.vn_quarter = convert(vn_quarter);
  out.vn_half = convert(vn_half);
  return out;
}

template struct ConvLayer<float>;
template struct ConvLayer<double>;
template struct ModelParams<float>;
template struct ModelParams<double>;
template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<float> ModelParams<float>::cast<float>() const;

}  // namespace odereg
