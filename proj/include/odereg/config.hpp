#pragma once

// Run configuration: an INI file with sections, overridable key by key.
// Every key is registered; unknown sections or keys are rejected.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "odereg/integrator.hpp"
#include "odereg/model.hpp"
#include "odereg/synth.hpp"
#include "odereg/training.hpp"

namespace odereg {

enum class RegistrationMethod { Ode, Recursive };

struct RunConfig {
  std::uint64_t seed = 0;
  int threads = 0;  // 0: library default

  // [synth]
  Grid3 extents{32, 32, 32};
  Vec3 spacing{1.0, 1.0, 1.0};
  int phases = 6;
  int landmarks = 64;
  PhantomConfig phantom;
  MotionConfig motion;

  ArchitectureConfig model;
  LossConfig loss;

  // [train]
  RegistrationMode train_mode = RegistrationMode::PairWise;
  int train_steps = 500;
  double learning_rate = kDefaultLearningRate;
  std::optional<double> train_step_size;  // mode default when unset
  bool all_phase_loss = false;
  int moving_phase = -1;                  // pair-wise; -1 selects phases / 2
  AugmentConfig augmentation;

  // [register]
  std::optional<double> test_step_size;
  RegistrationMethod method = RegistrationMethod::Ode;
  int recursions = 1;

  double resolved_train_step() const;  // 0.2 pair-wise, 0.5 group-wise
  double resolved_test_step() const;   // 0.1 pair-wise, 0.25 group-wise
  int resolved_moving_phase() const;
  TrainConfig train_config() const;

  void validate() const;
};

// Registered "section.key" names, in echo order.
const std::vector<std::string>& config_keys();

// Sets one registered key from text. Throws ConfigError for unknown keys or
// unparsable values.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& cfg, const std::string& key);

RunConfig load_config(const std::filesystem::path& ini);
RunConfig parse_config(const std::string& ini_text);

// INI text with every key at its resolved value.
std::string config_to_ini(const RunConfig& cfg);

}  // namespace odereg
