#pragma once

// Velocity estimation: cost volume, velocity networks and Compose&Scale.

#include "odereg/encoder.hpp"
#include "odereg/field.hpp"
#include "odereg/model.hpp"
#include "odereg/tensor.hpp"

namespace odereg {

template <class T>
struct RegistrationState {
  FeatureMaps<T> fixed;   // features of the reference frame
  FeatureMaps<T> moving;  // features of the frame the current interval ends at
  Tensor<T> context;      // [32, n/4]
  Tensor<T> phi;          // current displacement on the field grid
  double t = 0.0;
  double t_m = 1.0;
};

// (compose(phi, v) - phi) / (t_m - t). Throws ContractError unless t_m > t.
template <class T>
Tensor<T> compose_and_scale(const Tensor<T>& v, const Tensor<T>& phi, double t,
                            double t_m);

DisplacementField compose_and_scale(const DisplacementField& v,
                                    const DisplacementField& phi, double t,
                                    double t_m);

// Vector field v mapping warped moving features onto the fixed features, on
// the grid of the finest configured level. Does not use t or t_m.
template <class T>
Tensor<T> predict_vector_field(const RegistrationState<T>& state,
                               const ModelParams<T>& params);

// compose_and_scale(predict_vector_field(state), state.phi, state.t, state.t_m).
template <class T>
Tensor<T> estimate_velocity(const RegistrationState<T>& state,
                            const ModelParams<T>& params);

// Grid of the displacement field for a full-resolution image grid.
Grid3 field_grid(Grid3 image_grid, const ArchitectureConfig& arch);

}  // namespace odereg
