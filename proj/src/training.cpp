#include "odereg/training.hpp"

#include <random>
#include <string>

#include "odereg/encoder.hpp"
#include "odereg/errors.hpp"
#include "odereg/ops.hpp"

namespace odereg {

void TrainConfig::validate() const {
  if (steps < 0) throw ConfigError("training steps must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (!(step_size > 0.0) || step_size > 1.0) {
    throw ConfigError("training step size must lie in (0, 1]");
  }
  loss.validate();
}

template <class T>
Tensor<T> warp_full_resolution(const Tensor<T>& moving, const Tensor<T>& phi) {
  const Tensor<T> full = resample(phi, spatial_grid(moving), true);
  return grid_warp(moving, full);
}

namespace {

LossTerms loss_over(const Tensor<float>& fixed, const std::vector<Tensor<float>>& moving,
                    const std::vector<Tensor<float>>& fields, const LossConfig& cfg) {
  LossTerms terms;
  std::vector<Tensor<float>> warped, full_fields;
  for (std::size_t i = 0; i < moving.size(); ++i) {
    const Tensor<float> full = resample(fields[i], spatial_grid(moving[i]), true);
    full_fields.push_back(full);
    warped.push_back(grid_warp(moving[i], full));
    {
      NoGradGuard no_grad;
      terms.ncc += ncc_loss(fixed, warped.back(), cfg).item();
      terms.smoothness += smoothness_loss(full).item();
    }
  }
  const RegistrationMode mode =
      moving.size() == 1 ? RegistrationMode::PairWise : RegistrationMode::GroupWise;
  terms.total = total_loss(fixed, warped, full_fields, mode, cfg);
  return terms;
}

}  // namespace

LossTerms pairwise_loss(const ModelParams<float>& params, const Tensor<float>& fixed,
                        const Tensor<float>& moving, const TrainConfig& cfg) {
  const Tensor<float> phi = register_pairwise(fixed, moving, params, cfg.step_size);
  return loss_over(fixed, {moving}, {phi}, cfg.loss);
}

LossTerms groupwise_loss(const ModelParams<float>& params,
                         const std::vector<Tensor<float>>& frames,
                         const std::vector<int>& phases, const TrainConfig& cfg) {
  if (phases.empty()) throw ContractError("groupwise_loss: no phases selected");
  const auto enc = encode_sequence(frames, params);
  const IntegrationPlan plan =
      make_groupwise_plan(static_cast<int>(frames.size()), cfg.step_size);
  const auto traj = phases.size() == 1 ? integrate_plan(enc, params, plan, phases[0])
                                       : integrate_plan(enc, params, plan);
  std::vector<Tensor<float>> moving, fields;
  for (int t : phases) {
    if (t <= 0 || static_cast<std::size_t>(t) >= frames.size()) {
      throw ContractError("groupwise_loss: phase " + std::to_string(t) + " out of range");
    }
    moving.push_back(frames[static_cast<std::size_t>(t)]);
    fields.push_back(traj.fields.at(t));
  }
  return loss_over(frames[0], moving, fields, cfg.loss);
}

Trainer::Trainer(ModelParams<float>& params, TrainConfig cfg)
    : params_(params), cfg_(std::move(cfg)) {
  cfg_.validate();
  handles_ = params_.parameters();
  state_ = AdamState<float>::for_params(handles_);
}

Trainer::Trainer(ModelParams<float>& params, TrainConfig cfg, AdamState<float> state)
    : params_(params), cfg_(std::move(cfg)), state_(std::move(state)) {
  cfg_.validate();
  handles_ = params_.parameters();
}

std::vector<Volume> Trainer::maybe_augment(const std::vector<Volume>& frames) {
  const AugmentConfig& a = cfg_.augmentation;
  if (a.p_affine <= 0.0 && a.p_blur <= 0.0 && a.p_elastic <= 0.0 && a.p_contrast <= 0.0) {
    return frames;
  }
  return augment(frames, a, cfg_.seed * 1000003u + static_cast<std::uint64_t>(state_.step_count));
}

TrainLogEntry Trainer::apply(LossTerms terms, int phase) {
  zero_grads<float>(handles_);
  backward(terms.total);
  TrainLogEntry e;
  e.step = static_cast<int>(state_.step_count) + 1;
  e.phase = phase;
  e.loss = terms.total.item();
  e.ncc = terms.ncc;
  e.smoothness = terms.smoothness;
  e.grad_norm = grad_norm<float>(handles_);
  adam_step<float>(handles_, state_, cfg_.learning_rate);
  return e;
}

TrainLogEntry Trainer::step_pairwise(const Volume& fixed, const Volume& moving) {
  if (!(fixed.extents == moving.extents)) {
    throw ShapeError("training pair has different extents");
  }
  const auto frames = maybe_augment({fixed, moving});
  return apply(pairwise_loss(params_, frames[0].as_tensor<float>(),
                             frames[1].as_tensor<float>(), cfg_),
               1);
}

TrainLogEntry Trainer::step_groupwise(const std::vector<Volume>& seq) {
  if (seq.size() < 2) throw ContractError("group-wise training needs >= 2 frames");
  const auto frames = maybe_augment(seq);
  std::vector<Tensor<float>> tensors;
  for (const auto& f : frames) tensors.push_back(f.as_tensor<float>());
  std::vector<int> phases;
  int reported = 0;
  if (cfg_.all_phase_loss) {
    for (int t = 1; t < static_cast<int>(seq.size()); ++t) phases.push_back(t);
  } else {
    std::mt19937_64 rng(cfg_.seed ^ (0x9E3779B97F4A7C15ull *
                                     static_cast<std::uint64_t>(state_.step_count + 1)));
    reported = std::uniform_int_distribution<int>(1, static_cast<int>(seq.size()) - 1)(rng);
    phases.push_back(reported);
  }
  return apply(groupwise_loss(params_, tensors, phases, cfg_), reported);
}

std::vector<TrainLogEntry> train_pairwise(
    ModelParams<float>& params, const std::vector<std::pair<Volume, Volume>>& pairs,
    const TrainConfig& cfg, const TrainCallback& on_step) {
  if (pairs.empty()) throw ContractError("train_pairwise: no training pairs");
  Trainer trainer(params, cfg);
  std::vector<TrainLogEntry> log;
  for (int s = 0; s < cfg.steps; ++s) {
    const auto& [f, m] = pairs[static_cast<std::size_t>(s) % pairs.size()];
    log.push_back(trainer.step_pairwise(f, m));
    if (on_step) on_step(log.back());
  }
  return log;
}

std::vector<TrainLogEntry> train_groupwise(ModelParams<float>& params,
                                           const std::vector<std::vector<Volume>>& sequences,
                                           const TrainConfig& cfg,
                                           const TrainCallback& on_step) {
  if (sequences.empty()) throw ContractError("train_groupwise: no training sequences");
  Trainer trainer(params, cfg);
  std::vector<TrainLogEntry> log;
  for (int s = 0; s < cfg.steps; ++s) {
    log.push_back(trainer.step_groupwise(sequences[static_cast<std::size_t>(s) %
                                                   sequences.size()]));
    if (on_step) on_step(log.back());
  }
  return log;
}

template Tensor<float> warp_full_resolution<float>(const Tensor<float>&,
                                                   const Tensor<float>&);
template Tensor<double> warp_full_resolution<double>(const Tensor<double>&,
                                                     const Tensor<double>&);

}  // namespace odereg
