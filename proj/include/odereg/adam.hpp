#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "odereg/tensor.hpp"

namespace odereg {

inline constexpr double kDefaultLearningRate = 1e-4;

template <class T>
struct AdamState {
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
  std::int64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  // Zero moments shaped like `params`.
  static AdamState for_params(std::span<const Tensor<T>> params);
};

// One bias-corrected Adam update using the gradients accumulated on `params`.
// A parameter without an accumulated gradient is treated as having zero
// gradient. If any gradient is non-finite, nothing is modified and a
// NumericError naming the parameter index is thrown.
template <class T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state, double lr);

template <class T>
void zero_grads(std::span<Tensor<T>> params) {
  for (auto& p : params) p.zero_grad();
}

extern template struct AdamState<float>;
extern template struct AdamState<double>;
extern template void adam_step<float>(std::span<Tensor<float>>,
                                      AdamState<float>&, double);
extern template void adam_step<double>(std::span<Tensor<double>>,
                                       AdamState<double>&, double);

}  // namespace odereg
