#pragma once

// Fixed-step Euler integration of voxel velocities and the registration
// drivers built on it.

#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "odereg/encoder.hpp"
#include "odereg/field.hpp"
#include "odereg/model.hpp"
#include "odereg/objective.hpp"
#include "odereg/velocity.hpp"

namespace odereg {

template <class T>
using VelocityFn = std::function<Tensor<T>(const Tensor<T>& phi, double t)>;

template <class T>
struct EulerResult {
  Tensor<T> phi;
  std::vector<Tensor<T>> intermediates;  // states after each step, if requested
};

// K = round((t1 - t0) / h) steps of phi <- phi + v(phi, t) h.
// Throws NumericError naming the step when a velocity is not finite.
template <class T>
EulerResult<T> euler_integrate(const VelocityFn<T>& v_fn, const Tensor<T>& phi0,
                               double t0, double t1, double h,
                               bool keep_intermediates = false);

struct IntegrationPlan {
  RegistrationMode mode = RegistrationMode::PairWise;
  double step_size = 0.1;
  // Frame-index paths starting at 0. Consecutive entries form unit intervals.
  std::vector<std::vector<int>> paths;
  std::vector<int> checkpoints;  // phases emitted, each exactly once

  void validate(std::size_t sequence_length) const;
};

// Path [0, 1] over a fixed/moving pair.
IntegrationPlan make_pairwise_plan(double step_size);

// Forward path 0..T/2 and backward path 0, T-1, ..., T/2. The backward path's
// last interval is skipped because the forward path emits phase T/2.
IntegrationPlan make_groupwise_plan(int phases, double step_size);

template <class T>
struct TensorTrajectory {
  std::map<int, Tensor<T>> fields;  // phase -> displacement on the field grid
};

struct Trajectory {
  std::map<int, DisplacementField> fields_by_phase;
};

// Runs the plan on an encoded sequence. With `only_phase`, integration stops
// once that phase is emitted and only the intervals on its path are run.
template <class T>
TensorTrajectory<T> integrate_plan(const EncodedSequence<T>& encoded,
                                   const ModelParams<T>& params,
                                   const IntegrationPlan& plan,
                                   std::optional<int> only_phase = {});

Trajectory register_groupwise(const std::vector<Volume>& seq,
                              const ModelParams<float>& params,
                              const IntegrationPlan& plan);

template <class T>
Tensor<T> register_pairwise(const Tensor<T>& fixed, const Tensor<T>& moving,
                            const ModelParams<T>& params, double step_size);

DisplacementField register_pairwise(const Volume& fixed, const Volume& moving,
                                    const ModelParams<float>& params,
                                    const IntegrationPlan& plan);

// R recursions of phi <- compose(phi, v) with v predicted from the current phi.
template <class T>
Tensor<T> drrn_register(const Tensor<T>& fixed, const Tensor<T>& moving,
                        const ModelParams<T>& params, int recursions);

DisplacementField drrn_register(const Volume& fixed, const Volume& moving,
                                const ModelParams<float>& params, int recursions);

}  // namespace odereg
