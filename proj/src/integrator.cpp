#include "odereg/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "odereg/errors.hpp"
#include "odereg/ops.hpp"

namespace odereg {

template <class T>
EulerResult<T> euler_integrate(const VelocityFn<T>& v_fn, const Tensor<T>& phi0,
                               double t0, double t1, double h,
                               bool keep_intermediates) {
  if (!(t1 > t0)) {
    throw ContractError("euler_integrate: t1 must exceed t0");
  }
  if (!(h > 0.0) || h > (t1 - t0) * (1.0 + 1e-9)) {
    throw ContractError("euler_integrate: step size " + std::to_string(h) +
                        " must lie in (0, t1 - t0]");
  }
  const double ratio = (t1 - t0) / h;
  const auto steps = static_cast<std::int64_t>(std::llround(ratio));
  if (std::abs(ratio - static_cast<double>(steps)) > 1e-6 * std::max(1.0, ratio)) {
    throw ContractError("euler_integrate: interval length " + std::to_string(t1 - t0) +
                        " is not a multiple of step size " + std::to_string(h));
  }
  EulerResult<T> out;
  out.phi = phi0;
  for (std::int64_t k = 0; k < steps; ++k) {
    const double t = t0 + static_cast<double>(k) * h;
    const Tensor<T> v = v_fn(out.phi, t);
    if (v.shape() != out.phi.shape()) {
      throw ShapeError("euler_integrate: velocity " + shape_string(v.shape()) +
                       " does not match state " + shape_string(out.phi.shape()));
    }
    for (const T x : v.data()) {
      if (!std::isfinite(static_cast<double>(x))) {
        throw NumericError("euler_integrate: non-finite velocity at step " +
                           std::to_string(k) + " (t = " + std::to_string(t) + ")");
      }
    }
    out.phi = add(out.phi, h == 1.0 ? v : scale(v, h));
    if (keep_intermediates) out.intermediates.push_back(out.phi);
  }
  return out;
}

void IntegrationPlan::validate(std::size_t length) const {
  if (!(step_size > 0.0) || step_size > 1.0) {
    throw ConfigError("integration step size must lie in (0, 1], got " +
                      std::to_string(step_size));
  }
  if (paths.empty()) throw ConfigError("integration plan has no paths");
  std::set<int> reachable;
  for (const auto& path : paths) {
    if (path.size() < 2 || path.front() != 0) {
      throw ConfigError("integration paths must start at frame 0 and have >= 2 entries");
    }
    for (int f : path) {
      if (f < 0 || static_cast<std::size_t>(f) >= length) {
        throw ContractError("integration plan references frame " + std::to_string(f) +
                            " but the sequence has " + std::to_string(length) +
                            " frames");
      }
      reachable.insert(f);
    }
  }
  std::set<int> seen;
  for (int c : checkpoints) {
    if (!reachable.count(c)) {
      throw ConfigError("checkpoint " + std::to_string(c) + " is on no path");
    }
    if (!seen.insert(c).second) {
      throw ConfigError("checkpoint " + std::to_string(c) + " listed twice");
    }
  }
  if (mode == RegistrationMode::GroupWise && seen.size() != length) {
    throw ContractError("group-wise plan covers " + std::to_string(seen.size()) +
                        " phases but the sequence has " + std::to_string(length));
  }
}

IntegrationPlan make_pairwise_plan(double step_size) {
  IntegrationPlan plan;
  plan.mode = RegistrationMode::PairWise;
  plan.step_size = step_size;
  plan.paths = {{0, 1}};
  plan.checkpoints = {0, 1};
  return plan;
}

IntegrationPlan make_groupwise_plan(int phases, double step_size) {
  if (phases < 2) {
    throw ConfigError("group-wise plan needs at least 2 phases, got " +
                      std::to_string(phases));
  }
  IntegrationPlan plan;
  plan.mode = RegistrationMode::GroupWise;
  plan.step_size = step_size;
  const int mid = phases / 2;
  std::vector<int> forward, backward{0};
  for (int i = 0; i <= mid; ++i) forward.push_back(i);
  for (int i = phases - 1; i >= mid; --i) backward.push_back(i);
  plan.paths.push_back(forward);
  if (phases > 2) plan.paths.push_back(backward);
  for (int i = 0; i < phases; ++i) plan.checkpoints.push_back(i);
  return plan;
}

template <class T>
TensorTrajectory<T> integrate_plan(const EncodedSequence<T>& enc,
                                   const ModelParams<T>& params,
                                   const IntegrationPlan& plan,
                                   std::optional<int> only_phase) {
  plan.validate(enc.features.size());
  const std::set<int> wanted(plan.checkpoints.begin(), plan.checkpoints.end());
  if (only_phase && !wanted.count(*only_phase)) {
    throw ContractError("integrate_plan: phase " + std::to_string(*only_phase) +
                        " is not a checkpoint");
  }
  const Grid3 fg = params.arch.levels == 2 ? spatial_grid(enc.features[0].half_res)
                                           : spatial_grid(enc.features[0].quarter_res);
  TensorTrajectory<T> traj;
  const Tensor<T> zero = Tensor<T>::zeros(Shape{3, fg.n0, fg.n1, fg.n2});
  traj.fields[0] = zero;
  std::set<int> emitted{0};

  for (const auto& path : plan.paths) {
    // Skip paths (and trailing intervals) that emit nothing new.
    std::size_t last_needed = 0;
    for (std::size_t i = 1; i < path.size(); ++i) {
      const int f = path[i];
      const bool useful = only_phase ? f == *only_phase : wanted.count(f) > 0;
      if (useful && !emitted.count(f)) last_needed = i;
    }
    if (only_phase && last_needed == 0) continue;
    Tensor<T> phi = zero;
    for (std::size_t i = 1; i <= last_needed; ++i) {
      RegistrationState<T> state{enc.features[0], enc.features[path[i]],
                                 enc.context.hidden, phi, 0.0, 0.0};
      const double t_end = static_cast<double>(i);
      VelocityFn<T> fn = [&](const Tensor<T>& p, double t) {
        state.phi = p;
        state.t = t;
        state.t_m = t_end;
        return estimate_velocity(state, params);
      };
      phi = euler_integrate(fn, phi, t_end - 1.0, t_end, plan.step_size).phi;
      if (!emitted.count(path[i]) && wanted.count(path[i])) {
        traj.fields[path[i]] = phi;
        emitted.insert(path[i]);
      }
    }
    if (only_phase && emitted.count(*only_phase)) break;
  }
  return traj;
}

Trajectory register_groupwise(const std::vector<Volume>& seq,
                              const ModelParams<float>& params,
                              const IntegrationPlan& plan) {
  if (plan.mode != RegistrationMode::GroupWise) {
    throw ConfigError("register_groupwise: plan is not group-wise");
  }
  plan.validate(seq.size());
  NoGradGuard no_grad;
  const auto enc = encode_sequence(seq, params);
  const auto traj = integrate_plan(enc, params, plan);
  Trajectory out;
  const double fraction = params.arch.field_fraction();
  for (const auto& [phase, phi] : traj.fields) {
    out.fields_by_phase[phase] = DisplacementField::from_tensor(phi, fraction);
  }
  return out;
}

namespace {
template <class T>
void check_pair(const Tensor<T>& fixed, const Tensor<T>& moving) {
  if (fixed.shape() != moving.shape()) {
    throw ShapeError("registration pair has different extents: " +
                     shape_string(fixed.shape()) + " vs " + shape_string(moving.shape()));
  }
}
}  // namespace

template <class T>
Tensor<T> register_pairwise(const Tensor<T>& fixed, const Tensor<T>& moving,
                            const ModelParams<T>& params, double step_size) {
  check_pair(fixed, moving);
  const auto enc = encode_sequence<T>({fixed, moving}, params);
  return integrate_plan(enc, params, make_pairwise_plan(step_size)).fields.at(1);
}

DisplacementField register_pairwise(const Volume& fixed, const Volume& moving,
                                    const ModelParams<float>& params,
                                    const IntegrationPlan& plan) {
  if (!(fixed.extents == moving.extents)) {
    throw ShapeError("register_pairwise: fixed and moving extents differ");
  }
  NoGradGuard no_grad;
  const auto enc = encode_sequence(std::vector<Volume>{fixed, moving}, params);
  const auto traj = integrate_plan(enc, params, plan);
  return DisplacementField::from_tensor(traj.fields.at(1), params.arch.field_fraction());
}

template <class T>
Tensor<T> drrn_register(const Tensor<T>& fixed, const Tensor<T>& moving,
                        const ModelParams<T>& params, int recursions) {
  if (recursions < 1) {
    throw ContractError("drrn_register: recursions must be >= 1, got " +
                        std::to_string(recursions));
  }
  check_pair(fixed, moving);
  const auto enc = encode_sequence<T>({fixed, moving}, params);
  const Grid3 fg = params.arch.levels == 2 ? spatial_grid(enc.features[0].half_res)
                                           : spatial_grid(enc.features[0].quarter_res);
  RegistrationState<T> state{enc.features[0], enc.features[1], enc.context.hidden,
                             Tensor<T>::zeros(Shape{3, fg.n0, fg.n1, fg.n2}), 0.0, 1.0};
  for (int r = 0; r < recursions; ++r) {
    const Tensor<T> v = predict_vector_field(state, params);
    state.phi = compose(state.phi, v);
  }
  return state.phi;
}

DisplacementField drrn_register(const Volume& fixed, const Volume& moving,
                                const ModelParams<float>& params, int recursions) {
  NoGradGuard no_grad;
  return DisplacementField::from_tensor(
      drrn_register(fixed.as_tensor<float>(), moving.as_tensor<float>(), params,
                    recursions),
      params.arch.field_fraction());
}

#define ODEREG_INSTANTIATE(T)                                                       \
  template EulerResult<T> euler_integrate<T>(const VelocityFn<T>&, const Tensor<T>&, \
                                             double, double, double, bool);         \
  template TensorTrajectory<T> integrate_plan<T>(const EncodedSequence<T>&,         \
                                                 const ModelParams<T>&,             \
                                                 const IntegrationPlan&,            \
                                                 std::optional<int>);               \
  template Tensor<T> register_pairwise<T>(const Tensor<T>&, const Tensor<T>&,       \
                                          const ModelParams<T>&, double);           \
  template Tensor<T> drrn_register<T>(const Tensor<T>&, const Tensor<T>&,           \
                                      const ModelParams<T>&, int);
ODEREG_INSTANTIATE(float)
ODEREG_INSTANTIATE(double)
#undef ODEREG_INSTANTIATE

}  // namespace odereg
