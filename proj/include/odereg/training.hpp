#pragma once

// Unsupervised training loops for pair-wise and group-wise registration.

#include <cstdint>
#include <functional>
#include <vector>

#include "odereg/adam.hpp"
#include "odereg/field.hpp"
#include "odereg/integrator.hpp"
#include "odereg/model.hpp"
#include "odereg/objective.hpp"
#include "odereg/synth.hpp"

namespace odereg {

struct TrainConfig {
  int steps = 500;
  double learning_rate = kDefaultLearningRate;
  double step_size = 0.2;       // Euler step used during training
  LossConfig loss;
  std::uint64_t seed = 0;       // phase sampling and augmentation
  bool all_phase_loss = false;  // group-wise: average over every phase
  AugmentConfig augmentation;

  void validate() const;
};

struct TrainLogEntry {
  int step = 0;
  int phase = 1;          // sampled moving phase (1 for pair-wise)
  double loss = 0.0;
  double ncc = 0.0;         // summed over the phases in the loss
  double smoothness = 0.0;  // unweighted, summed over the phases in the loss
  double grad_norm = 0.0;
};

struct LossTerms {
  Tensor<float> total;
  double ncc = 0.0;
  double smoothness = 0.0;
};

// Full-resolution warp of `moving` by a field living on a coarser grid.
template <class T>
Tensor<T> warp_full_resolution(const Tensor<T>& moving, const Tensor<T>& phi);

// Differentiable loss of one forward pass.
LossTerms pairwise_loss(const ModelParams<float>& params, const Tensor<float>& fixed,
                        const Tensor<float>& moving, const TrainConfig& cfg);
LossTerms groupwise_loss(const ModelParams<float>& params,
                         const std::vector<Tensor<float>>& frames,
                         const std::vector<int>& phases, const TrainConfig& cfg);

class Trainer {
 public:
  Trainer(ModelParams<float>& params, TrainConfig cfg);
  Trainer(ModelParams<float>& params, TrainConfig cfg, AdamState<float> state);

  TrainLogEntry step_pairwise(const Volume& fixed, const Volume& moving);
  TrainLogEntry step_groupwise(const std::vector<Volume>& frames);

  const AdamState<float>& optimizer() const { return state_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  TrainLogEntry apply(LossTerms terms, int phase);
  std::vector<Volume> maybe_augment(const std::vector<Volume>& frames);

  ModelParams<float>& params_;
  TrainConfig cfg_;
  AdamState<float> state_;
  std::vector<Tensor<float>> handles_;
};

using TrainCallback = std::function<void(const TrainLogEntry&)>;

// Cycles through `pairs` (fixed, moving) for cfg.steps Adam updates.
std::vector<TrainLogEntry> train_pairwise(
    ModelParams<float>& params, const std::vector<std::pair<Volume, Volume>>& pairs,
    const TrainConfig& cfg, const TrainCallback& on_step = {});

// Cycles through `sequences`; each step draws one moving phase (or all).
std::vector<TrainLogEntry> train_groupwise(ModelParams<float>& params,
                                           const std::vector<std::vector<Volume>>& sequences,
                                           const TrainConfig& cfg,
                                           const TrainCallback& on_step = {});

}  // namespace odereg
