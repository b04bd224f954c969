// Line-oriented `key = value` run configuration shared by the CLI, the
// checkpoint format, and tests. Unknown keys are errors; CLI flags override
// file values, which override built-in defaults.
#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fc2mfn/datagen.hpp"
#include "fc2mfn/model.hpp"
#include "fc2mfn/training.hpp"

namespace fc2mfn {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  GenParams gen;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

inline std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::istringstream is(s);
  std::string part;
  while (std::getline(is, part, ',')) {
    part = trim(part);
    if (!part.empty()) out.push_back(std::stoi(part));
  }
  return out;
}

inline std::string int_list_str(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

struct ConfigKey {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline const std::map<std::string, ConfigKey>& config_schema() {
  static const std::map<std::string, ConfigKey> schema = [] {
    std::map<std::string, ConfigKey> m;
    auto num = [](const std::string& v) { return std::stod(v); };
    // shortest representation that parses back exactly
    auto fmt = [](double v) {
      std::string best;
      for (int prec = 15; prec <= 17; ++prec) {
        std::ostringstream os;
        os.precision(prec);
        os << v;
        best = os.str();
        if (std::stod(best) == v) break;
      }
      return best;
    };
#define FC2MFN_KEY_INT(name, field)                                              \
  m[name] = ConfigKey{[](RunConfig& c, const std::string& v) { c.field = std::stoi(v); }, \
                      [](const RunConfig& c) { return std::to_string(c.field); }}
#define FC2MFN_KEY_REAL(name, field)                                        \
  m[name] = ConfigKey{[num](RunConfig& c, const std::string& v) { c.field = num(v); }, \
                      [fmt](const RunConfig& c) { return fmt(c.field); }}
    m["image_h"] = ConfigKey{[](RunConfig& c, const std::string& v) {
                               c.model.image_h = std::stoi(v);
                               c.gen.image_h = c.model.image_h;
                             },
                             [](const RunConfig& c) { return std::to_string(c.model.image_h); }};
    m["image_w"] = ConfigKey{[](RunConfig& c, const std::string& v) {
                               c.model.image_w = std::stoi(v);
                               c.gen.image_w = c.model.image_w;
                             },
                             [](const RunConfig& c) { return std::to_string(c.model.image_w); }};
    FC2MFN_KEY_INT("base_width", model.base_width);
    FC2MFN_KEY_INT("num_classes", model.num_classes);
    FC2MFN_KEY_INT("pool_window", model.pool_window);
    FC2MFN_KEY_INT("pool_stride", model.pool_stride);
    FC2MFN_KEY_REAL("delta", model.delta);
    m["stage_widths"] =
        ConfigKey{[](RunConfig& c, const std::string& v) { c.model.stage_widths = parse_int_list(v); },
                  [](const RunConfig& c) { return int_list_str(c.model.stage_widths); }};
    m["aspp_dilations"] =
        ConfigKey{[](RunConfig& c, const std::string& v) { c.model.aspp_dilations = parse_int_list(v); },
                  [](const RunConfig& c) { return int_list_str(c.model.aspp_dilations); }};
    FC2MFN_KEY_REAL("learning_rate", train.learning_rate);
    FC2MFN_KEY_INT("batch_size", train.batch_size);
    FC2MFN_KEY_INT("epochs", train.epochs);
    FC2MFN_KEY_REAL("beta1", train.beta1);
    FC2MFN_KEY_REAL("beta2", train.beta2);
    FC2MFN_KEY_REAL("adam_epsilon", train.adam_epsilon);
    FC2MFN_KEY_INT("eval_interval", train.eval_interval);
    m["seed"] = ConfigKey{[](RunConfig& c, const std::string& v) {
                            c.train.seed = std::stoull(v);
                            c.gen.seed = c.train.seed;
                          },
                          [](const RunConfig& c) { return std::to_string(c.train.seed); }};
    FC2MFN_KEY_INT("num_scenes", gen.num_scenes);
    FC2MFN_KEY_INT("buildings_min", gen.buildings_min);
    FC2MFN_KEY_INT("buildings_max", gen.buildings_max);
    FC2MFN_KEY_REAL("height_min", gen.height_min);
    FC2MFN_KEY_REAL("height_max", gen.height_max);
    FC2MFN_KEY_REAL("refl_shadow", gen.refl_shadow);
    FC2MFN_KEY_REAL("refl_ground", gen.refl_ground);
    FC2MFN_KEY_REAL("refl_layover", gen.refl_layover);
    FC2MFN_KEY_INT("looks", gen.looks);
    FC2MFN_KEY_REAL("kz", gen.kz);
    FC2MFN_KEY_REAL("phase_noise", gen.phase_noise);
    FC2MFN_KEY_REAL("incidence", gen.incidence);
    FC2MFN_KEY_INT("train_count", gen.train_count);
#undef FC2MFN_KEY_INT
#undef FC2MFN_KEY_REAL
    return m;
  }();
  return schema;
}

}  // namespace detail

inline void apply_config_line(RunConfig& cfg, const std::string& raw_line) {
  const std::string line = detail::trim(raw_line);
  if (line.empty() || line[0] == '#') return;
  const std::size_t eq = line.find('=');
  if (eq == std::string::npos)
    throw ConfigError("config: expected `key = value`, got: " + line);
  const std::string key = detail::trim(line.substr(0, eq));
  const std::string value = detail::trim(line.substr(eq + 1));
  const auto& schema = detail::config_schema();
  auto it = schema.find(key);
  if (it == schema.end()) throw ConfigError("config: unknown key: " + key);
  try {
    it->second.set(cfg, value);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("config: bad value for " + key + ": " + value);
  }
}

inline void apply_config_text(RunConfig& cfg, const std::string& text) {
  std::istringstream is(text);
  for (std::string line; std::getline(is, line);) apply_config_line(cfg, line);
}

inline void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path);
  for (std::string line; std::getline(f, line);) apply_config_line(cfg, line);
}

// Canonical serialization; parsing it back reproduces the config.
inline std::string config_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& [key, entry] : detail::config_schema())
    out += key + " = " + entry.get(cfg) + "\n";
  return out;
}

// Desk-scale preset: trainable on a CPU in minutes.
inline RunConfig toy_config() {
  RunConfig c;
  c.model.image_h = c.model.image_w = 64;
  c.model.base_width = 4;
  c.model.stage_widths = {4, 8, 16, 32};
  c.model.aspp_dilations = {1, 2, 3, 4};  // encoder output is 4x4
  c.model.num_classes = 3;
  c.model.delta = 1.0;
  c.train.learning_rate = 1e-5;
  c.train.batch_size = 2;
  c.train.epochs = 300;
  c.train.eval_interval = 5;
  c.gen.num_scenes = 44;
  c.gen.train_count = 32;
  c.gen.image_h = c.gen.image_w = 64;
  return c;
}

// Full-scale preset mirroring the published training protocol.
inline RunConfig paper_config() {
  RunConfig c;
  c.model.image_h = c.model.image_w = 256;
  c.model.base_width = 64;
  c.model.stage_widths = {64, 128, 256, 512};
  c.model.aspp_dilations = {1, 6, 12, 18};
  c.model.num_classes = 3;
  c.model.delta = 1.0;
  c.train.learning_rate = 1e-5;
  c.train.batch_size = 2;
  c.train.epochs = 100;
  c.train.eval_interval = 5;
  c.gen.num_scenes = 312;
  c.gen.image_h = c.gen.image_w = 256;
  return c;
}

inline RunConfig preset_config(const std::string& name) {
  if (name.empty()) return RunConfig{};
  if (name == "toy") return toy_config();
  if (name == "paper") return paper_config();
  throw ConfigError("unknown preset: " + name + " (expected toy or paper)");
}

}  // namespace fc2mfn
