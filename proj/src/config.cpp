#include "odereg/config.hpp"

#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "odereg/errors.hpp"
#include "odereg/io.hpp"

namespace odereg {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& expected) {
  throw ConfigError("config key " + key + ": cannot parse \"" + value + "\" as " + expected);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) bad_value(key, v, "a number");
    return d;
  } catch (const std::logic_error&) {
    bad_value(key, v, "a number");
  }
}

long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used != v.size()) bad_value(key, v, "an integer");
    return i;
  } catch (const std::logic_error&) {
    bad_value(key, v, "an integer");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::string fmt(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

struct Entry {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class Field>
Entry double_entry(Field field) {
  return {[field](RunConfig& c, const std::string& k, const std::string& v) {
            field(c) = parse_double(k, v);
          },
          [field](const RunConfig& c) { return fmt(field(const_cast<RunConfig&>(c))); }};
}

template <class Field>
Entry int_entry(Field field) {
  return {[field](RunConfig& c, const std::string& k, const std::string& v) {
            field(c) = static_cast<std::remove_reference_t<decltype(field(c))>>(
                parse_int(k, v));
          },
          [field](const RunConfig& c) {
            return std::to_string(field(const_cast<RunConfig&>(c)));
          }};
}

template <class Field>
Entry bool_entry(Field field) {
  return {[field](RunConfig& c, const std::string& k, const std::string& v) {
            field(c) = parse_bool(k, v);
          },
          [field](const RunConfig& c) { return fmt_bool(field(const_cast<RunConfig&>(c))); }};
}

// Unset values echo their resolved default.
template <class Field, class Resolved>
Entry optional_double_entry(Field field, Resolved resolved) {
  return {[field](RunConfig& c, const std::string& k, const std::string& v) {
            if (v == "auto") {
              field(c).reset();
            } else {
              field(c) = parse_double(k, v);
            }
          },
          [resolved](const RunConfig& c) { return fmt(resolved(c)); }};
}

using Registry = std::vector<std::pair<std::string, Entry>>;

#define FIELD(expr) [](RunConfig & c) -> auto& { return c.expr; }

const Registry& registry() {
  static const Registry r = [] {
    Registry r;
    r.emplace_back("run.seed", Entry{[](RunConfig& c, const std::string& k,
                                        const std::string& v) {
                                       const long long s = parse_int(k, v);
                                       if (s < 0) bad_value(k, v, "a non-negative integer");
                                       c.seed = static_cast<std::uint64_t>(s);
                                     },
                                     [](const RunConfig& c) { return std::to_string(c.seed); }});
    r.emplace_back("run.threads", int_entry(FIELD(threads)));
    r.emplace_back(
        "synth.extents",
        Entry{[](RunConfig& c, const std::string& k, const std::string& v) {
                const auto parts = split_list(v);
                if (parts.size() == 1) {
                  const auto n = parse_int(k, parts[0]);
                  c.extents = {n, n, n};
                } else if (parts.size() == 3) {
                  // listed x, y, z
                  c.extents = {parse_int(k, parts[2]), parse_int(k, parts[1]),
                               parse_int(k, parts[0])};
                } else {
                  bad_value(k, v, "one extent or x,y,z extents");
                }
              },
              [](const RunConfig& c) {
                return std::to_string(c.extents.n2) + "," + std::to_string(c.extents.n1) +
                       "," + std::to_string(c.extents.n0);
              }});
    r.emplace_back(
        "synth.spacing",
        Entry{[](RunConfig& c, const std::string& k, const std::string& v) {
                const auto parts = split_list(v);
                if (parts.size() == 1) {
                  const double s = parse_double(k, parts[0]);
                  c.spacing = {s, s, s};
                } else if (parts.size() == 3) {
                  c.spacing = {parse_double(k, parts[2]), parse_double(k, parts[1]),
                               parse_double(k, parts[0])};
                } else {
                  bad_value(k, v, "one spacing or x,y,z spacings");
                }
              },
              [](const RunConfig& c) {
                return fmt(c.spacing[2]) + "," + fmt(c.spacing[1]) + "," + fmt(c.spacing[0]);
              }});
    r.emplace_back("synth.phases", int_entry(FIELD(phases)));
    r.emplace_back("synth.landmarks", int_entry(FIELD(landmarks)));
    r.emplace_back("synth.max_amplitude", double_entry(FIELD(motion.max_amplitude)));
    r.emplace_back("synth.motion_cutoff", double_entry(FIELD(motion.cutoff)));
    r.emplace_back("synth.motion_modes", int_entry(FIELD(motion.modes)));
    r.emplace_back("synth.ellipsoids", int_entry(FIELD(phantom.ellipsoids)));
    r.emplace_back("synth.texture_waves", int_entry(FIELD(phantom.texture_waves)));
    r.emplace_back("synth.texture_min_wavelength",
                   double_entry(FIELD(phantom.texture_min_wavelength)));
    r.emplace_back("synth.texture_max_wavelength",
                   double_entry(FIELD(phantom.texture_max_wavelength)));
    r.emplace_back("synth.texture_amplitude", double_entry(FIELD(phantom.texture_amplitude)));
    r.emplace_back("synth.background_amplitude",
                   double_entry(FIELD(phantom.background_amplitude)));

    r.emplace_back("model.levels", int_entry(FIELD(model.levels)));
    r.emplace_back("model.use_gru", bool_entry(FIELD(model.use_gru)));
    r.emplace_back("model.use_cost_volume", bool_entry(FIELD(model.use_cost_volume)));
    r.emplace_back("model.radius_quarter", int_entry(FIELD(model.radius_quarter)));
    r.emplace_back("model.radius_half", int_entry(FIELD(model.radius_half)));
    r.emplace_back("model.leaky_slope", double_entry(FIELD(model.leaky_slope)));
    r.emplace_back("model.final_layer_scale", double_entry(FIELD(model.final_layer_scale)));

    r.emplace_back("loss.window", int_entry(FIELD(loss.window)));
    r.emplace_back("loss.smoothness_weight", double_entry(FIELD(loss.smoothness_weight)));
    r.emplace_back("loss.epsilon", double_entry(FIELD(loss.epsilon)));

    r.emplace_back(
        "train.mode",
        Entry{[](RunConfig& c, const std::string& k, const std::string& v) {
                if (v == "pairwise") {
                  c.train_mode = RegistrationMode::PairWise;
                } else if (v == "groupwise") {
                  c.train_mode = RegistrationMode::GroupWise;
                } else {
                  bad_value(k, v, "pairwise or groupwise");
                }
              },
              [](const RunConfig& c) {
                return std::string(c.train_mode == RegistrationMode::PairWise ? "pairwise"
                                                                              : "groupwise");
              }});
    r.emplace_back("train.steps", int_entry(FIELD(train_steps)));
    r.emplace_back("train.learning_rate", double_entry(FIELD(learning_rate)));
    r.emplace_back("train.step_size",
                   optional_double_entry(FIELD(train_step_size),
                                         [](const RunConfig& c) { return c.resolved_train_step(); }));
    r.emplace_back("train.all_phase_loss", bool_entry(FIELD(all_phase_loss)));
    r.emplace_back("train.moving_phase", int_entry(FIELD(moving_phase)));

    r.emplace_back("augment.p_affine", double_entry(FIELD(augmentation.p_affine)));
    r.emplace_back("augment.p_blur", double_entry(FIELD(augmentation.p_blur)));
    r.emplace_back("augment.p_elastic", double_entry(FIELD(augmentation.p_elastic)));
    r.emplace_back("augment.p_contrast", double_entry(FIELD(augmentation.p_contrast)));

    r.emplace_back("register.step_size",
                   optional_double_entry(FIELD(test_step_size),
                                         [](const RunConfig& c) { return c.resolved_test_step(); }));
    r.emplace_back(
        "register.method",
        Entry{[](RunConfig& c, const std::string& k, const std::string& v) {
                if (v == "ode") {
                  c.method = RegistrationMethod::Ode;
                } else if (v == "recursive") {
                  c.method = RegistrationMethod::Recursive;
                } else {
                  bad_value(k, v, "ode or recursive");
                }
              },
              [](const RunConfig& c) {
                return std::string(c.method == RegistrationMethod::Ode ? "ode" : "recursive");
              }});
    r.emplace_back("register.recursions", int_entry(FIELD(recursions)));
    return r;
  }();
  return r;
}

#undef FIELD

const Entry& find_entry(const std::string& key) {
  for (const auto& [name, entry] : registry()) {
    if (name == key) return entry;
  }
  throw ConfigError("unknown config key \"" + key + "\"");
}

}  // namespace

double RunConfig::resolved_train_step() const {
  if (train_step_size) return *train_step_size;
  return train_mode == RegistrationMode::PairWise ? 0.2 : 0.5;
}

double RunConfig::resolved_test_step() const {
  if (test_step_size) return *test_step_size;
  return train_mode == RegistrationMode::PairWise ? 0.1 : 0.25;
}

int RunConfig::resolved_moving_phase() const {
  return moving_phase >= 0 ? moving_phase : phases / 2;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.steps = train_steps;
  t.learning_rate = learning_rate;
  t.step_size = resolved_train_step();
  t.loss = loss;
  t.seed = seed;
  t.all_phase_loss = all_phase_loss;
  t.augmentation = augmentation;
  return t;
}

void RunConfig::validate() const {
  if (threads < 0) throw ConfigError("run.threads must be >= 0");
  if (extents.n0 <= 0 || extents.n1 <= 0 || extents.n2 <= 0 || extents.n0 % 4 ||
      extents.n1 % 4 || extents.n2 % 4) {
    throw ConfigError("synth.extents must be positive multiples of 4");
  }
  for (double s : spacing) {
    if (!(s > 0.0)) throw ConfigError("synth.spacing must be positive");
  }
  if (phases < 2) throw ConfigError("synth.phases must be >= 2");
  if (landmarks < 1) throw ConfigError("synth.landmarks must be >= 1");
  if (!(motion.max_amplitude >= 0.0) || !(motion.cutoff > 0.0) || motion.modes < 1) {
    throw ConfigError("synth motion settings out of range");
  }
  model.validate();
  train_config().validate();
  const double h = resolved_test_step();
  if (!(h > 0.0) || h > 1.0) throw ConfigError("register.step_size must lie in (0, 1]");
  if (recursions < 1) throw ConfigError("register.recursions must be >= 1");
  const int mp = resolved_moving_phase();
  if (mp < 1 || mp >= phases) {
    throw ConfigError("train.moving_phase must lie in [1, synth.phases)");
  }
  for (double p : {augmentation.p_affine, augmentation.p_blur, augmentation.p_elastic,
                   augmentation.p_contrast}) {
    if (p < 0.0 || p > 1.0) throw ConfigError("augmentation probabilities must lie in [0, 1]");
  }
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, entry] : registry()) k.push_back(name);
    return k;
  }();
  return keys;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  find_entry(key).set(cfg, key, trim(value));
}

std::string get_config_value(const RunConfig& cfg, const std::string& key) {
  return find_entry(key).get(cfg);
}

RunConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("config key \"" + section + "\" must sit inside a section");
    }
    for (const auto& [key, value] : body) {
      set_config_value(cfg, section + "." + key, value.data());
    }
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& ini) {
  return parse_config(read_text_file(ini));
}

std::string config_to_ini(const RunConfig& cfg) {
  std::ostringstream out;
  std::string current;
  for (const auto& key : config_keys()) {
    const auto dot = key.find('.');
    const std::string section = key.substr(0, dot);
    if (section != current) {
      if (!current.empty()) out << '\n';
      out << '[' << section << "]\n";
      current = section;
    }
    out << key.substr(dot + 1) << " = " << get_config_value(cfg, key) << '\n';
  }
  return out.str();
}

}  // namespace odereg
