#include "odereg/cli.hpp"

#include <cblas.h>
#include <omp.h>

#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "odereg/config.hpp"
#include "odereg/errors.hpp"
#include "odereg/evaluation.hpp"
#include "odereg/field.hpp"
#include "odereg/integrator.hpp"
#include "odereg/io.hpp"
#include "odereg/synth.hpp"
#include "odereg/training.hpp"

namespace odereg {

namespace {

using nlohmann::json;

struct SequenceData {
  std::vector<Volume> frames;
  std::vector<LandmarkSet> landmarks;
};

std::string frame_name(int t) {
  std::ostringstream os;
  os << "frame_" << std::setw(2) << std::setfill('0') << t << ".json";
  return os.str();
}

std::string indexed_name(const std::string& stem, int t, const std::string& ext) {
  std::ostringstream os;
  os << stem << '_' << std::setw(2) << std::setfill('0') << t << ext;
  return os.str();
}

SequenceData read_sequence(const fs::path& dir) {
  const fs::path manifest = dir / "sequence.json";
  json j;
  try {
    j = json::parse(read_text_file(manifest));
  } catch (const json::exception& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  }
  SequenceData s;
  for (const auto& f : j.at("frames")) s.frames.push_back(read_volume(dir / f.get<std::string>()));
  if (s.frames.size() < 2) throw FormatError(manifest.string() + ": needs >= 2 frames");
  for (const auto& f : s.frames) {
    if (!(f.extents == s.frames.front().extents)) {
      throw ContractError(manifest.string() + ": frames have different extents");
    }
  }
  if (j.contains("landmarks")) {
    s.landmarks = read_landmarks(dir / j["landmarks"].get<std::string>());
    for (std::size_t t = 0; t < s.landmarks.size(); ++t) {
      if (s.landmarks[t].phase != static_cast<int>(t)) {
        throw FormatError(manifest.string() + ": landmark phases must run 0.." +
                          std::to_string(s.frames.size() - 1));
      }
    }
  }
  return s;
}

void apply_threads(const RunConfig& cfg) {
  int threads = cfg.threads;
  if (const char* env = std::getenv("ODEREG_NUM_THREADS")) {
    try {
      threads = std::stoi(env);
    } catch (const std::logic_error&) {
      throw ConfigError(std::string("ODEREG_NUM_THREADS is not an integer: ") + env);
    }
    if (threads < 1) throw ConfigError("ODEREG_NUM_THREADS must be >= 1");
  }
  if (threads > 0) {
    omp_set_num_threads(threads);
    openblas_set_num_threads(threads);
  }
}

void check_model_grid(const ArchitectureConfig&, Grid3 g) {
  if (g.n0 % 4 || g.n1 % 4 || g.n2 % 4) {
    throw ContractError("volume extents must be divisible by 4 for the feature pyramid");
  }
}

void check_field_for(const DisplacementField& phi, Grid3 image) {
  if (!(full_resolution_extents(phi) == image)) {
    throw ContractError("field grid does not match the image extents");
  }
}

std::string metric(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

// key = value lines in insertion order.
class Summary {
 public:
  void add(const std::string& k, const std::string& v) { lines_.emplace_back(k, v); }
  void add(const std::string& k, double v) { add(k, metric(v)); }
  std::string text() const {
    std::string s;
    for (const auto& [k, v] : lines_) s += k + " = " + v + "\n";
    return s;
  }

 private:
  std::vector<std::pair<std::string, std::string>> lines_;
};

class Runner {
 public:
  Runner(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  int run(const std::vector<std::string>& args);

 private:
  RunConfig resolve(const std::string& config_path, const std::vector<std::string>& sets);
  void echo(const RunConfig& cfg, const std::string& command);

  void synth(const RunConfig& cfg, const fs::path& out_dir);
  void train(const RunConfig& cfg, const fs::path& data, const fs::path& out,
             const fs::path& log_path);
  void register_pair(const RunConfig& cfg, const fs::path& ckpt, const fs::path& fixed,
                     const fs::path& moving, const fs::path& out_dir);
  void track(const RunConfig& cfg, const fs::path& ckpt, const fs::path& data,
             const fs::path& out_dir);
  void eval(const RunConfig& cfg, const fs::path& data, const fs::path& fields,
            const fs::path& out_dir);
  void jacobian(const fs::path& field, const fs::path& out);

  std::ostream& out_;
  std::ostream& err_;
};

RunConfig Runner::resolve(const std::string& config_path,
                          const std::vector<std::string>& sets) {
  RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--set expects section.key=value, got \"" + s + "\"");
    }
    set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  cfg.validate();
  apply_threads(cfg);
  return cfg;
}

void Runner::echo(const RunConfig& cfg, const std::string& command) {
  out_ << "# odereg " << command << ", seed " << cfg.seed << "\n"
       << config_to_ini(cfg) << "# end of configuration\n";
}

void Runner::synth(const RunConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  const Volume phantom = [&] {
    Volume v = make_phantom(cfg.extents, cfg.seed, cfg.phantom);
    v.spacing = cfg.spacing;
    return v;
  }();
  const MotionModel motion = MotionModel::random(cfg.extents, cfg.phases, cfg.seed + 1, cfg.motion);
  const SyntheticSequence seq =
      generate_sequence(phantom, motion, cfg.phases, cfg.landmarks, cfg.seed + 2);
  json manifest;
  manifest["phases"] = cfg.phases;
  manifest["seed"] = cfg.seed;
  manifest["frames"] = json::array();
  manifest["ground_truth"] = json::array();
  for (int t = 0; t < cfg.phases; ++t) {
    write_volume(dir / frame_name(t), seq.frames[static_cast<std::size_t>(t)]);
    write_field(dir / indexed_name("truth", t, ".json"),
                ground_truth_field(motion, static_cast<double>(t)));
    manifest["frames"].push_back(frame_name(t));
    manifest["ground_truth"].push_back(indexed_name("truth", t, ".json"));
  }
  write_landmarks(dir / "landmarks.csv", seq.landmarks);
  manifest["landmarks"] = "landmarks.csv";
  write_text_file(dir / "sequence.json", manifest.dump(2) + "\n");
  write_text_file(dir / "config.ini", config_to_ini(cfg));
  out_ << "wrote " << cfg.phases << " frames and " << cfg.landmarks << " landmarks to "
       << dir.string() << "\n";
}

void Runner::train(const RunConfig& cfg, const fs::path& data, const fs::path& out,
                   const fs::path& log_path) {
  const SequenceData seq = read_sequence(data);
  check_model_grid(cfg.model, seq.frames[0].extents);
  ModelParams<float> params = ModelParams<float>::initialize(cfg.model, cfg.seed);
  const TrainConfig tc = cfg.train_config();
  Trainer trainer(params, tc);
  std::vector<TrainLogEntry> log;
  const int every = std::max(1, tc.steps / 20);
  const int mp = cfg.resolved_moving_phase();
  if (cfg.train_mode == RegistrationMode::PairWise &&
      static_cast<std::size_t>(mp) >= seq.frames.size()) {
    throw ContractError("train.moving_phase exceeds the sequence length");
  }
  for (int s = 0; s < tc.steps; ++s) {
    log.push_back(cfg.train_mode == RegistrationMode::PairWise
                      ? trainer.step_pairwise(seq.frames[0], seq.frames[static_cast<std::size_t>(mp)])
                      : trainer.step_groupwise(seq.frames));
    if (log.back().step % every == 0) {
      out_ << "step " << log.back().step << " loss " << metric(log.back().loss) << "\n";
    }
  }
  save_checkpoint(out, params, &trainer.optimizer());
  write_loss_log(log_path, log);
  out_ << "wrote checkpoint " << out.string() << " and loss log " << log_path.string() << "\n";
}

DisplacementField register_with(const RunConfig& cfg, const ModelParams<float>& params,
                                const Volume& fixed, const Volume& moving) {
  if (cfg.method == RegistrationMethod::Recursive) {
    return drrn_register(fixed, moving, params, cfg.recursions);
  }
  return register_pairwise(fixed, moving, params, make_pairwise_plan(cfg.resolved_test_step()));
}

void Runner::register_pair(const RunConfig& cfg, const fs::path& ckpt, const fs::path& fixed_path,
                           const fs::path& moving_path, const fs::path& dir) {
  const Volume fixed = read_volume(fixed_path);
  const Volume moving = read_volume(moving_path);
  if (!(fixed.extents == moving.extents)) {
    throw ContractError("fixed and moving volumes have different extents");
  }
  const Checkpoint ck = load_checkpoint(ckpt);
  check_model_grid(ck.params.arch, fixed.extents);
  fs::create_directories(dir);
  const DisplacementField phi = register_with(cfg, ck.params, fixed, moving);
  const Volume warped = warp_volume(moving, phi);
  write_field(dir / "phi.json", phi);
  write_volume(dir / "warped.json", warped);
  write_pgm_slice(dir / "warped_slice.pgm", warped);
  out_ << "wrote " << (dir / "phi.json").string() << "\n";
}

void Runner::track(const RunConfig& cfg, const fs::path& ckpt, const fs::path& data,
                   const fs::path& dir) {
  const SequenceData seq = read_sequence(data);
  const Checkpoint ck = load_checkpoint(ckpt);
  check_model_grid(ck.params.arch, seq.frames[0].extents);
  fs::create_directories(dir);
  // Tracking is group-wise whatever train.mode says, so use its default step.
  RunConfig groupwise = cfg;
  groupwise.train_mode = RegistrationMode::GroupWise;
  const IntegrationPlan plan = make_groupwise_plan(static_cast<int>(seq.frames.size()),
                                                   groupwise.resolved_test_step());
  const Trajectory traj = register_groupwise(seq.frames, ck.params, plan);
  std::vector<LandmarkSet> tracked;
  for (const auto& [phase, phi] : traj.fields_by_phase) {
    write_field(dir / indexed_name("phi", phase, ".json"), phi);
    const Volume warped = warp_volume(seq.frames[static_cast<std::size_t>(phase)], phi);
    write_pgm_slice(dir / indexed_name("warped_slice", phase, ".pgm"), warped);
    write_pgm_slice(dir / indexed_name("frame_slice", phase, ".pgm"),
                    seq.frames[static_cast<std::size_t>(phase)]);
    if (!seq.landmarks.empty()) {
      LandmarkSet moved = displace_points(seq.landmarks[0], phi);
      moved.phase = phase;
      tracked.push_back(std::move(moved));
    }
  }
  if (!tracked.empty()) write_landmarks(dir / "trajectory.csv", tracked);
  out_ << "wrote " << traj.fields_by_phase.size() << " fields to " << dir.string() << "\n";
}

void Runner::eval(const RunConfig& cfg, const fs::path& data, const fs::path& fields,
                  const fs::path& dir) {
  const SequenceData seq = read_sequence(data);
  if (seq.landmarks.empty()) throw FormatError("sequence has no landmarks to evaluate");
  const Grid3 g = seq.frames[0].extents;
  const Vec3 spacing = seq.frames[0].spacing;
  Trajectory traj;
  std::vector<int> phases;
  const bool groupwise = fs::is_directory(fields);
  if (groupwise) {
    for (int t = 0; t < static_cast<int>(seq.frames.size()); ++t) {
      const fs::path p = fields / indexed_name("phi", t, ".json");
      traj.fields_by_phase[t] = read_field(p);
      check_field_for(traj.fields_by_phase[t], g);
      if (t > 0) phases.push_back(t);
    }
  } else {
    const int mp = cfg.resolved_moving_phase();
    if (static_cast<std::size_t>(mp) >= seq.frames.size()) {
      throw ContractError("train.moving_phase exceeds the sequence length");
    }
    traj.fields_by_phase[mp] = read_field(fields);
    check_field_for(traj.fields_by_phase[mp], g);
    phases.push_back(mp);
  }
  fs::create_directories(dir);
  std::ostringstream csv;
  csv << "phase,index,error_mm,baseline_mm\n" << std::setprecision(10);
  std::vector<double> errors, baseline;
  Summary sum;
  sum.add("mode", groupwise ? "groupwise" : "pairwise");
  std::vector<std::pair<std::string, double>> per_phase;
  for (int t : phases) {
    const auto& phi = traj.fields_by_phase.at(t);
    const TREReport r = tre_pairwise(phi, seq.landmarks[0],
                                     seq.landmarks[static_cast<std::size_t>(t)], spacing);
    const TREReport b = tre_pairwise(DisplacementField::zeros(phi.extents, phi.resolution_fraction),
                                     seq.landmarks[0], seq.landmarks[static_cast<std::size_t>(t)],
                                     spacing);
    for (std::size_t i = 0; i < r.errors_mm.size(); ++i) {
      csv << t << ',' << i << ',' << r.errors_mm[i] << ',' << b.errors_mm[i] << '\n';
    }
    errors.insert(errors.end(), r.errors_mm.begin(), r.errors_mm.end());
    baseline.insert(baseline.end(), b.errors_mm.begin(), b.errors_mm.end());
    const auto st = jacobian_stats(jacobian_determinant(resample_field(phi, g)));
    const Volume warped = warp_volume(seq.frames[static_cast<std::size_t>(t)], phi);
    per_phase.emplace_back(indexed_name("tre_mm_phase", t, ""), r.mean);
    per_phase.emplace_back(indexed_name("baseline_mm_phase", t, ""), b.mean);
    per_phase.emplace_back(indexed_name("jacobian_std_phase", t, ""), st.std_dev);
    per_phase.emplace_back(indexed_name("fold_fraction_phase", t, ""), st.neg_fraction);
    per_phase.emplace_back(indexed_name("mae_phase", t, ""),
                           mean_absolute_error(warped, seq.frames[0]));
    per_phase.emplace_back(indexed_name("baseline_mae_phase", t, ""),
                           mean_absolute_error(seq.frames[static_cast<std::size_t>(t)],
                                               seq.frames[0]));
  }
  const TREReport all = summarize_errors(errors);
  const TREReport base = summarize_errors(baseline);
  sum.add("landmarks", std::to_string(seq.landmarks[0].points.size()));
  sum.add("mean_tre_mm", all.mean);
  sum.add("std_tre_mm", all.std_dev);
  sum.add("baseline_mean_tre_mm", base.mean);
  sum.add("baseline_std_tre_mm", base.std_dev);
  std::optional<WilcoxonResult> w;
  try {
    w = wilcoxon_signed_rank(errors, baseline);
  } catch (const ContractError&) {
    // Fewer than 5 landmarks moved: no test is reported.
  }
  if (w) {
    sum.add("wilcoxon_p", w->p_value);
    sum.add("wilcoxon_statistic", w->statistic);
    sum.add("wilcoxon_pairs", std::to_string(w->n_used));
    sum.add("wilcoxon_exact", w->exact ? "true" : "false");
    sum.add("wilcoxon_degenerate", w->degenerate ? "true" : "false");
    sum.add("significance", w->degenerate ? std::string("none")
                                           : (significance_stars(w->p_value).empty()
                                                  ? std::string("n.s.")
                                                  : significance_stars(w->p_value)));
  } else {
    sum.add("significance", "insufficient pairs");
  }
  for (const auto& [k, v] : per_phase) sum.add(k, v);
  write_text_file(dir / "report.csv", csv.str());
  write_text_file(dir / "summary.txt", sum.text());
  out_ << sum.text();
}

void Runner::jacobian(const fs::path& field, const fs::path& out) {
  const DisplacementField phi = read_field(field);
  const DisplacementField full = resample_field(phi, full_resolution_extents(phi));
  const auto det = jacobian_determinant(full);
  const auto st = jacobian_stats(det);
  Summary sum;
  sum.add("voxels", std::to_string(st.voxels));
  sum.add("jacobian_std", st.std_dev);
  sum.add("fold_fraction", st.neg_fraction);
  sum.add("jacobian_min", *std::min_element(det.begin(), det.end()));
  sum.add("jacobian_max", *std::max_element(det.begin(), det.end()));
  if (!out.empty()) {
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_text_file(out, sum.text());
  }
  out_ << sum.text();
}

int Runner::run(const std::vector<std::string>& args) {
  CLI::App app{"ODE-based recursive deformable registration on synthetic 4D phantoms",
               "odereg"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<double> step_size;
  std::optional<int> steps;
  auto common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "INI configuration file")
        ->check(CLI::ExistingFile);
    sub->add_option("--set", sets, "override a config key: section.key=value");
    sub->add_option("--seed", seed, "override run.seed");
  };

  fs::path out, data, ckpt, fixed, moving, fields, log_path;
  auto* synth_cmd = app.add_subcommand("synth", "generate a phantom sequence with landmarks");
  common(synth_cmd);
  synth_cmd->add_option("-o,--out", out, "output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "train a model on a synthetic sequence");
  common(train_cmd);
  train_cmd->add_option("-d,--data", data, "sequence directory")->required();
  train_cmd->add_option("-o,--out", out, "checkpoint path")->required();
  train_cmd->add_option("--log", log_path, "loss log CSV (default: <out>.loss.csv)");
  train_cmd->add_option("--step-size", step_size, "override train.step_size");
  train_cmd->add_option("--steps", steps, "override train.steps");

  auto* reg_cmd = app.add_subcommand("register", "register a moving volume to a fixed one");
  common(reg_cmd);
  reg_cmd->add_option("-m,--checkpoint", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  reg_cmd->add_option("--fixed", fixed, "fixed volume header")->required();
  reg_cmd->add_option("--moving", moving, "moving volume header")->required();
  reg_cmd->add_option("-o,--out", out, "output directory")->required();
  reg_cmd->add_option("--step-size", step_size, "override register.step_size");

  auto* track_cmd = app.add_subcommand("track", "group-wise tracking of a whole sequence");
  common(track_cmd);
  track_cmd->add_option("-m,--checkpoint", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  track_cmd->add_option("-d,--data", data, "sequence directory")->required();
  track_cmd->add_option("-o,--out", out, "output directory")->required();
  track_cmd->add_option("--step-size", step_size, "override register.step_size");

  auto* eval_cmd = app.add_subcommand("eval", "TRE, Jacobian and Wilcoxon report");
  common(eval_cmd);
  eval_cmd->add_option("-d,--data", data, "sequence directory")->required();
  eval_cmd->add_option("-f,--fields", fields,
                       "field header (pair-wise) or track output directory (group-wise)")
      ->required();
  eval_cmd->add_option("-o,--out", out, "report directory")->required();

  auto* jac_cmd = app.add_subcommand("jacobian", "Jacobian determinant statistics of a field");
  jac_cmd->add_option("-f,--field", fields, "field header")->required();
  jac_cmd->add_option("-o,--out", out, "summary file");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out_ << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err_ << "odereg: " << e.what() << "\n";
    if (app.get_subcommands().empty()) err_ << app.help();
    return kExitUsage;
  }
  CLI::App* cmd = app.get_subcommands().front();
  const std::string name = cmd->get_name();

  if (name == "jacobian") {
    jacobian(fields, out);
    return kExitOk;
  }
  if (seed) sets.push_back("run.seed=" + std::to_string(*seed));
  if (steps) sets.push_back("train.steps=" + std::to_string(*steps));
  if (step_size) {
    std::ostringstream v;
    v << std::setprecision(17) << *step_size;
    sets.push_back((name == "train" ? "train.step_size=" : "register.step_size=") + v.str());
  }
  const RunConfig cfg = resolve(config_path, sets);
  echo(cfg, name);
  if (name == "synth") {
    synth(cfg, out);
  } else if (name == "train") {
    train(cfg, data, out, log_path.empty() ? fs::path(out.string() + ".loss.csv") : log_path);
  } else if (name == "register") {
    register_pair(cfg, ckpt, fixed, moving, out);
  } else if (name == "track") {
    track(cfg, ckpt, data, out);
  } else if (name == "eval") {
    eval(cfg, data, fields, out);
  }
  return kExitOk;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Runner runner(out, err);
  try {
    return runner.run(args);
  } catch (const ConfigError& e) {
    err << "odereg: configuration error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "odereg: format error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ShapeError& e) {
    err << "odereg: validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ContractError& e) {
    err << "odereg: validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NumericError& e) {
    err << "odereg: numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "odereg: error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace odereg
