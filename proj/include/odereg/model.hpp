#pragma once

// Learnable parameters of the registration network and their layout.
//
//   pyramid   #1 1:16 s2, #2 16:16, #3 16:16 (half res)
//             #4 16:32 s2, #5 32:32, #6 32:32 (quarter res)
//   gru       update / reset / candidate, 64:32 each
//   vn_q      #10 in:64, #11 in+64:48, #12 in+112:32, #13 in+144:16, #14 16:3
//   vn_h      #15 in:32, #16 in+32:16, #17 16:3
//
// Each dense-skip layer sees the level input concatenated with the outputs of
// every earlier layer of the same level.

#include <cstdint>
#include <string>
#include <vector>

#include "odereg/tensor.hpp"

namespace odereg {

struct ArchitectureConfig {
  int levels = 1;               // 1: quarter res only, 2: quarter + half
  bool use_gru = true;          // false: context = fixed quarter features
  bool use_cost_volume = true;  // false: no cost volume channels
  int radius_quarter = 2;
  int radius_half = 1;
  double leaky_slope = 0.1;
  double final_layer_scale = 5e-4;  // init bound multiplier of #14 / #17

  void validate() const;
  std::int64_t quarter_input_channels() const;
  std::int64_t half_input_channels() const;
  // Grid fraction on which displacement fields live: 1/4 or 1/2.
  double field_fraction() const { return levels == 2 ? 0.5 : 0.25; }
};

inline constexpr std::int64_t kHalfChannels = 16;
inline constexpr std::int64_t kQuarterChannels = 32;
inline constexpr std::int64_t kHiddenChannels = 32;
inline constexpr std::int64_t kContextHalfChannels = 16;  // output of #13

template <class T>
struct ConvLayer {
  std::string name;
  Tensor<T> weight;  // [cout, cin, 3, 3, 3]
  Tensor<T> bias;    // [cout]
  int stride = 1;

  std::int64_t in_channels() const { return weight.dim(1); }
  std::int64_t out_channels() const { return weight.dim(0); }
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <class T>
struct ModelParams {
  ArchitectureConfig arch;
  std::vector<ConvLayer<T>> pyramid;   // 6 layers
  std::vector<ConvLayer<T>> gru;       // update, reset, candidate
  std::vector<ConvLayer<T>> vn_quarter;  // 5 layers
  std::vector<ConvLayer<T>> vn_half;     // 3 layers, only when levels == 2

  // Fan-in scaled uniform weights, zero biases, final velocity layers scaled
  // by arch.final_layer_scale. Deterministic in `seed`.
  static ModelParams initialize(const ArchitectureConfig& arch,
                                std::uint64_t seed);

  // Handles sharing storage with the model (in a fixed order).
  std::vector<Tensor<T>> parameters() const;
  std::vector<ConvLayer<T>*> layers();
  std::vector<const ConvLayer<T>*> layers() const;
  std::int64_t parameter_count() const;

  // Deep copy in another precision (no tape history).
  template <class U>
  ModelParams<U> cast() const;
};

extern template struct ConvLayer<float>;
extern template struct ConvLayer<double>;
extern template struct ModelParams<float>;
extern template struct ModelParams<double>;
extern template ModelParams<double> ModelParams<float>::cast<double>() const;
extern template ModelParams<float> ModelParams<double>::cast<float>() const;
extern template ModelParams<float> ModelParams<float>::cast<float>() const;

}  // namespace odereg
