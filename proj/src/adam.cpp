#include "odereg/adam.hpp"

#include <cmath>
#include <string>

namespace odereg {

template <class T>
AdamState<T> AdamState<T>::for_params(std::span<const Tensor<T>> params) {
  AdamState state;
  for (const auto& p : params) {
    state.first_moment.emplace_back(static_cast<std::size_t>(p.numel()), T(0));
    state.second_moment.emplace_back(static_cast<std::size_t>(p.numel()), T(0));
  }
  return state;
}

template <class T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state, double lr) {
  if (state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: state tracks " +
                     std::to_string(state.first_moment.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first_moment[i].size() != static_cast<std::size_t>(params[i].numel())) {
      throw ShapeError("adam_step: moment buffer " + std::to_string(i) +
                       " is not congruent with its parameter");
    }
    for (T g : params[i].grad()) {
      if (!std::isfinite(g)) {
        throw NumericError("adam_step: non-finite gradient in parameter " +
                           std::to_string(i) + "; step rejected");
      }
    }
  }

  ++state.step_count;
  const double b1 = state.beta1, b2 = state.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto grad = params[i].mutable_grad();
    auto value = params[i].mutable_data();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double g = grad[k];
      const double mk = b1 * m[k] + (1.0 - b1) * g;
      const double vk = b2 * v[k] + (1.0 - b2) * g * g;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double m_hat = mk / correction1;
      const double v_hat = vk / correction2;
      value[k] = static_cast<T>(value[k] - lr * m_hat / (std::sqrt(v_hat) + state.epsilon));
    }
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(std::span<Tensor<float>>, AdamState<float>&, double);
template void adam_step<double>(std::span<Tensor<double>>, AdamState<double>&, double);

}  // namespace odereg
