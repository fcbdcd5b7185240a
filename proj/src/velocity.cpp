#include "odereg/velocity.hpp"

#include <string>

#include "odereg/errors.hpp"
#include "odereg/ops.hpp"

namespace odereg {

template <class T>
Tensor<T> compose_and_scale(const Tensor<T>& v, const Tensor<T>& phi, double t,
                            double t_m) {
  if (!(t_m > t)) {
    throw ContractError("compose_and_scale: moving time " + std::to_string(t_m) +
                        " must exceed current time " + std::to_string(t));
  }
  if (v.shape() != phi.shape()) {
    throw ShapeError("compose_and_scale: v " + shape_string(v.shape()) +
                     " and phi " + shape_string(phi.shape()) + " differ");
  }
  const Tensor<T> delta = sub(compose(phi, v), phi);
  const double dt = t_m - t;
  return dt == 1.0 ? delta : scale(delta, 1.0 / dt);
}

DisplacementField compose_and_scale(const DisplacementField& v,
                                    const DisplacementField& phi, double t,
                                    double t_m) {
  if (!(v.extents == phi.extents)) {
    throw ShapeError("compose_and_scale: fields live on different grids");
  }
  NoGradGuard no_grad;
  return DisplacementField::from_tensor(
      compose_and_scale(v.as_tensor<float>(), phi.as_tensor<float>(), t, t_m),
      phi.resolution_fraction);
}

Grid3 field_grid(Grid3 g, const ArchitectureConfig& arch) {
  const std::int64_t d = arch.levels == 2 ? 2 : 4;
  return {g.n0 / d, g.n1 / d, g.n2 / d};
}

namespace {

// Dense-skip stack: layer i sees [input, out_0, ..., out_{i-1}]; all but the
// final layer are followed by LeakyReLU. Returns (v, second-last output).
template <class T>
std::pair<Tensor<T>, Tensor<T>> run_velocity_net(
    const std::vector<ConvLayer<T>>& layers, const Tensor<T>& input, double slope) {
  std::vector<Tensor<T>> features{input};
  Tensor<T> last_hidden;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    const Tensor<T> in = features.size() == 1 ? input : concat_channels(features);
    last_hidden = leaky_relu(layers[i](in), slope);
    features.push_back(last_hidden);
  }
  return {layers.back()(last_hidden), last_hidden};
}

template <class T>
void check_state(const RegistrationState<T>& s, const ModelParams<T>& params) {
  if (params.vn_quarter.size() != 5) {
    throw ConfigError("estimate_velocity: quarter-level network missing");
  }
  if (params.arch.levels == 2 && params.vn_half.size() != 3) {
    throw ConfigError("estimate_velocity: half-level network missing");
  }
  const Grid3 q = spatial_grid(s.fixed.quarter_res);
  if (!(spatial_grid(s.moving.quarter_res) == q) || !(spatial_grid(s.context) == q)) {
    throw ShapeError("estimate_velocity: fixed, moving and context grids differ");
  }
  const Grid3 expected =
      params.arch.levels == 2 ? spatial_grid(s.fixed.half_res) : q;
  if (s.phi.rank() != 4 || s.phi.dim(0) != 3 || !(spatial_grid(s.phi) == expected)) {
    throw ShapeError("estimate_velocity: phi " + shape_string(s.phi.shape()) +
                     " is not a displacement on the finest level grid");
  }
}

}  // namespace

template <class T>
Tensor<T> predict_vector_field(const RegistrationState<T>& s,
                               const ModelParams<T>& params) {
  check_state(s, params);
  const ArchitectureConfig& arch = params.arch;
  const double slope = arch.leaky_slope;

  // Quarter level, starting from v = 0 so phi' = phi.
  const Grid3 q = spatial_grid(s.fixed.quarter_res);
  const Tensor<T> phi_q = resample(s.phi, q, true);
  const Tensor<T> warped_q = grid_warp(s.moving.quarter_res, phi_q);
  std::vector<Tensor<T>> parts;
  if (arch.use_cost_volume) {
    parts.push_back(local_cost_volume(warped_q, s.fixed.quarter_res, arch.radius_quarter));
  }
  parts.insert(parts.end(), {phi_q, s.fixed.quarter_res, s.context, warped_q});
  auto [v_q, context_q] =
      run_velocity_net(params.vn_quarter, concat_channels(parts), slope);
  if (arch.levels == 1) return v_q;

  // Half level refines the upsampled quarter prediction.
  const Grid3 h = spatial_grid(s.fixed.half_res);
  const Tensor<T> v_up = resample(v_q, h, true);
  const Tensor<T> context_h = resample(context_q, h, false);
  const Tensor<T> phi_prime = compose(s.phi, v_up);
  const Tensor<T> warped_h = grid_warp(s.moving.half_res, phi_prime);
  parts.clear();
  if (arch.use_cost_volume) {
    parts.push_back(local_cost_volume(warped_h, s.fixed.half_res, arch.radius_half));
  }
  parts.insert(parts.end(), {phi_prime, s.fixed.half_res, context_h, warped_h});
  auto [dv, unused] = run_velocity_net(params.vn_half, concat_channels(parts), slope);
  return add(v_up, dv);
}

template <class T>
Tensor<T> estimate_velocity(const RegistrationState<T>& s,
                            const ModelParams<T>& params) {
  return compose_and_scale(predict_vector_field(s, params), s.phi, s.t, s.t_m);
}

#define ODEREG_INSTANTIATE(T)                                                     \
  template Tensor<T> compose_and_scale<T>(const Tensor<T>&, const Tensor<T>&,     \
                                          double, double);                        \
  template Tensor<T> predict_vector_field<T>(const RegistrationState<T>&,         \
                                             const ModelParams<T>&);              \
  template Tensor<T> estimate_velocity<T>(const RegistrationState<T>&,            \
                                          const ModelParams<T>&);
ODEREG_INSTANTIATE(float)
ODEREG_INSTANTIATE(double)
#undef ODEREG_INSTANTIATE

}  // namespace odereg
