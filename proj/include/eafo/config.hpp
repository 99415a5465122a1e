// Experiment configuration: a flat key-value format with [sections].
//
// Syntax (documented in the README):
//   - lines starting with '#' or ';' are comments; blank lines are ignored
//   - '[section]' opens a section; 'key = value' assigns within it
//   - unknown sections or keys are errors (fail closed)
// serialize() emits the canonical form: fixed section/key order, doubles with
// round-trip precision, so parse(serialize(c)) == c field by field. The
// config hash covers everything except the [strategy] section, so strategy
// sweeps under one environment share a hash.

#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "eafo/dataset.hpp"
#include "eafo/errors.hpp"
#include "eafo/idx.hpp"
#include "eafo/simulator.hpp"
#include "eafo/synthetic.hpp"

namespace eafo {

struct ExperimentConfig {
  // [experiment]
  std::uint64_t seed = 1;
  int num_clients = 32;
  int rounds = 200;
  double time_budget_s = 0.0;  // 0 = unlimited

  // [dataset]
  std::string dataset_kind = "synthetic";  // synthetic | idx
  int num_examples = 6400;
  int eval_examples = 2000;
  int num_classes = 10;
  int feature_dim = 32;
  double cluster_spread = 1.0;
  double pair_separation = 0.0;
  double noise_anisotropy = 1.0;
  std::string train_images, train_labels, eval_images, eval_labels;

  // [partition]
  std::string partition_scheme = "iid";  // iid | non_iid
  int shards_per_client = 2;

  // [model]
  std::string model_arch = "logreg";  // logreg | mlp
  std::vector<int> hidden;

  // [training]
  double lr = 0.01;
  int batch_size = 32;

  // [strategy]
  std::string strategy_kind = "eafo";
  double fixed_i = 1.0;
  double fixed_eps = 0.0;
  std::string controller_mode = "cube_root";  // cube_root | stationary

  // [controller]
  double i0 = 30.0;
  double eps0 = 4.0;
  int i_min = 1;
  int i_max = 30;
  double eps_min = 4.0;
  double eps_max = 8.0;

  // [time]
  double uplink_bps = 100e3;
  double downlink_bps = 100e3;
  double per_step_compute_s = 0.005;
  int bits_per_param = 32;
  int bits_per_atom = 64;
  std::vector<double> device_multipliers;

  // [output]
  std::string output_path = "metrics.csv";
  std::string output_format = "csv";  // csv | jsonl

  bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw parse_error("config: bad number for '" + key + "': " + s);
  }
}

inline long long parse_int(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw parse_error("config: bad integer for '" + key + "': " + s);
  }
}

template <typename T, typename F>
inline std::vector<T> parse_list(const std::string& s, F item) {
  std::vector<T> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(item(cur));
  }
  return out;
}

template <typename T>
inline std::string join_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_same_v<T, double>)
      out += fmt_double(v[i]);
    else
      out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace detail

inline ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw parse_error("config: malformed section at line " + std::to_string(lineno));
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw parse_error("config: expected 'key = value' at line " + std::to_string(lineno));
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    const std::string qual = section + "." + key;

    if (qual == "experiment.seed")
      c.seed = static_cast<std::uint64_t>(detail::parse_int(val, qual));
    else if (qual == "experiment.num_clients")
      c.num_clients = static_cast<int>(detail::parse_int(val, qual));
    else if (qual == "experiment.rounds")
      c.rounds = static_cast<int>(detail::parse_int(val, qual));
    else if (qual == "experiment.time_budget_s")
      c.time_budget_s = detail::parse_double(val, qual);
    else if (qual == "dataset.kind")
      c.dataset_kind = val;
    else if (qual == "dataset.num_examples")
      c.num_examples = static_cast<int>(detail::parse_int(val, qual));
    else if (qual == "dataset.eval_examples")
      c.eval_examples = static_cast<int>(detail::parse_int(val, qual));
    else if (qual == "dataset.num_classes")
      c.num_classes = static_cast<int>(detail::parse_int(val, qual));
    else if (qual == "dataset.feature_dim")
      c.feature_dim = static_cast<int>(detail::parse_int(val, qual));
    else if (qual == "dataset.cluster_spread")
      c.cluster_spread = detail::parse_double(val, qual);
    else if (qual == "dataset.pair_separation")
      c.pair_separation = detail::parse_double(val, qual);
    else if (qual == "dataset.noise_anisotropy")
      c.noise_anisotropy = detail::parse_double(val, qual);
    else if (qual == "dataset.train_images")
      c.train_images = val;
    else if (qual == "dataset.train_labels")
      c.train_labels = val;
    else if (qual == "dataset.eval_images")
      c.eval_images = val;
    else if (qual == "dataset.eval_labels")
      c.eval_labels = val;
    else if (qual == "partition.scheme")
      c.partition_scheme = val;
    else if (qual == "partition.shards_per_client")
      c.shards_per_client = static_cast<int>(detail::parse_int(val, qual));
    else if (qual == "model.arch")
      c.model_arch = val;
    else if (qual == "model.hidden")
      c.hidden = detail::parse_list<int>(val, [&](const std::string& s) {
        return static_cast<int>(detail::parse_int(s, qual));
      });
    else if (qual == "training.lr")
      c.lr = detail::parse_double(val, qual);
    else if (qual == "training.batch_size")
      c.batch_size = static_cast<int>(detail::parse_int(val, qual));
    else if (qual == "strategy.kind")
      c.strategy_kind = val;
    else if (qual == "strategy.fixed_i")
      c.fixed_i = detail::parse_double(val, qual);
    else if (qual == "strategy.fixed_eps")
      c.fixed_eps = detail::parse_double(val, qual);
    else if (qual == "strategy.controller")
      c.controller_mode = val;
    else if (qual == "controller.i0")
      c.i0 = detail::parse_double(val, qual);
    else if (qual == "controller.eps0")
      c.eps0 = detail::parse_double(val, qual);
    else if (qual == "controller.i_min")
      c.i_min = static_cast<int>(detail::parse_int(val, qual));
    else if (qual == "controller.i_max")
      c.i_max = static_cast<int>(detail::parse_int(val, qual));
    else if (qual == "controller.eps_min")
      c.eps_min = detail::parse_double(val, qual);
    else if (qual == "controller.eps_max")
      c.eps_max = detail::parse_double(val, qual);
    else if (qual == "time.uplink_bps")
      c.uplink_bps = detail::parse_double(val, qual);
    else if (qual == "time.downlink_bps")
      c.downlink_bps = detail::parse_double(val, qual);
    else if (qual == "time.per_step_compute_s")
      c.per_step_compute_s = detail::parse_double(val, qual);
    else if (qual == "time.bits_per_param")
      c.bits_per_param = static_cast<int>(detail::parse_int(val, qual));
    else if (qual == "time.bits_per_atom")
      c.bits_per_atom = static_cast<int>(detail::parse_int(val, qual));
    else if (qual == "time.device_multipliers")
      c.device_multipliers = detail::parse_list<double>(
          val, [&](const std::string& s) { return detail::parse_double(s, qual); });
    else if (qual == "output.path")
      c.output_path = val;
    else if (qual == "output.format")
      c.output_format = val;
    else
      throw parse_error("config: unknown key '" + qual + "' at line " +
                        std::to_string(lineno));
  }
  return c;
}

inline ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("config: cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

// Canonical text form; stable section and key order.
inline std::string serialize_config(const ExperimentConfig& c) {
  using detail::fmt_double;
  std::ostringstream out;
  out << "[experiment]\n";
  out << "seed = " << c.seed << "\n";
  out << "num_clients = " << c.num_clients << "\n";
  out << "rounds = " << c.rounds << "\n";
  out << "time_budget_s = " << fmt_double(c.time_budget_s) << "\n";
  out << "\n[dataset]\n";
  out << "kind = " << c.dataset_kind << "\n";
  out << "num_examples = " << c.num_examples << "\n";
  out << "eval_examples = " << c.eval_examples << "\n";
  out << "num_classes = " << c.num_classes << "\n";
  out << "feature_dim = " << c.feature_dim << "\n";
  out << "cluster_spread = " << fmt_double(c.cluster_spread) << "\n";
  out << "pair_separation = " << fmt_double(c.pair_separation) << "\n";
  out << "noise_anisotropy = " << fmt_double(c.noise_anisotropy) << "\n";
  out << "train_images = " << c.train_images << "\n";
  out << "train_labels = " << c.train_labels << "\n";
  out << "eval_images = " << c.eval_images << "\n";
  out << "eval_labels = " << c.eval_labels << "\n";
  out << "\n[partition]\n";
  out << "scheme = " << c.partition_scheme << "\n";
  out << "shards_per_client = " << c.shards_per_client << "\n";
  out << "\n[model]\n";
  out << "arch = " << c.model_arch << "\n";
  out << "hidden = " << detail::join_list(c.hidden) << "\n";
  out << "\n[training]\n";
  out << "lr = " << fmt_double(c.lr) << "\n";
  out << "batch_size = " << c.batch_size << "\n";
  out << "\n[strategy]\n";
  out << "kind = " << c.strategy_kind << "\n";
  out << "fixed_i = " << fmt_double(c.fixed_i) << "\n";
  out << "fixed_eps = " << fmt_double(c.fixed_eps) << "\n";
  out << "controller = " << c.controller_mode << "\n";
  out << "\n[controller]\n";
  out << "i0 = " << fmt_double(c.i0) << "\n";
  out << "eps0 = " << fmt_double(c.eps0) << "\n";
  out << "i_min = " << c.i_min << "\n";
  out << "i_max = " << c.i_max << "\n";
  out << "eps_min = " << fmt_double(c.eps_min) << "\n";
  out << "eps_max = " << fmt_double(c.eps_max) << "\n";
  out << "\n[time]\n";
  out << "uplink_bps = " << fmt_double(c.uplink_bps) << "\n";
  out << "downlink_bps = " << fmt_double(c.downlink_bps) << "\n";
  out << "per_step_compute_s = " << fmt_double(c.per_step_compute_s) << "\n";
  out << "bits_per_param = " << c.bits_per_param << "\n";
  out << "bits_per_atom = " << c.bits_per_atom << "\n";
  out << "device_multipliers = " << detail::join_list(c.device_multipliers) << "\n";
  out << "\n[output]\n";
  out << "path = " << c.output_path << "\n";
  out << "format = " << c.output_format << "\n";
  return out.str();
}

// FNV-1a over the canonical serialization minus the [strategy] section:
// sweep runs of different strategies under one environment share the hash.
inline std::string config_hash(const ExperimentConfig& c) {
  ExperimentConfig env = c;
  env.strategy_kind = "";
  env.fixed_i = 0.0;
  env.fixed_eps = 0.0;
  env.controller_mode = "";
  env.output_path = "";  // output location does not change the experiment
  const std::string s = serialize_config(env);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline void validate_config(const ExperimentConfig& c) {
  if (c.num_clients < 1) throw config_error("config: num_clients must be >= 1");
  if (c.rounds < 0) throw config_error("config: rounds must be >= 0");
  if (!(c.lr > 0.0)) throw config_error("config: lr must be positive");
  if (c.batch_size < 1) throw config_error("config: batch_size must be >= 1");
  if (c.time_budget_s < 0.0) throw config_error("config: time_budget_s must be >= 0");
  if (c.dataset_kind != "synthetic" && c.dataset_kind != "idx")
    throw config_error("config: dataset.kind must be 'synthetic' or 'idx'");
  if (c.dataset_kind == "idx") {
    for (const auto& p : {c.train_images, c.train_labels, c.eval_images, c.eval_labels}) {
      if (p.empty())
        throw config_error("config: idx dataset requires all four file paths");
      if (!std::filesystem::exists(p))
        throw config_error("config: dataset file does not exist: " + p);
    }
  } else {
    if (c.num_examples < 1 || c.eval_examples < 1)
      throw config_error("config: synthetic dataset needs positive example counts");
    if (c.num_classes < 2) throw config_error("config: num_classes must be >= 2");
    if (c.feature_dim < 1) throw config_error("config: feature_dim must be >= 1");
    if (c.cluster_spread < 0.0) throw config_error("config: cluster_spread must be >= 0");
    if (c.pair_separation < 0.0) throw config_error("config: pair_separation must be >= 0");
    if (c.noise_anisotropy < 1.0)
      throw config_error("config: noise_anisotropy must be >= 1");
  }
  if (c.partition_scheme != "iid" && c.partition_scheme != "non_iid")
    throw config_error("config: partition.scheme must be 'iid' or 'non_iid'");
  if (c.partition_scheme == "non_iid" && c.shards_per_client < 1)
    throw config_error("config: shards_per_client must be >= 1");
  if (c.model_arch != "logreg" && c.model_arch != "mlp")
    throw config_error("config: model.arch must be 'logreg' or 'mlp'");
  if (c.model_arch == "mlp" && c.hidden.empty())
    throw config_error("config: mlp model needs at least one hidden width");
  for (int h : c.hidden)
    if (h < 1) throw config_error("config: hidden widths must be positive");
  if (c.output_format != "csv" && c.output_format != "jsonl")
    throw config_error("config: output.format must be 'csv' or 'jsonl'");
  StrategyConfig::kind_from_name(c.strategy_kind);  // throws on unknown
  if (c.controller_mode != "cube_root" && c.controller_mode != "stationary")
    throw config_error("config: strategy.controller must be 'cube_root' or 'stationary'");
  if (c.controller_mode == "stationary" && !(c.time_budget_s > 0.0))
    throw config_error("config: stationary controller requires a time budget");

  // Exercise the domain validators too.
  SimSettings probe;
  probe.num_clients = c.num_clients;
  probe.lr = c.lr;
  probe.batch_size = c.batch_size;
  probe.rounds = c.rounds;
  probe.strategy.kind = StrategyConfig::kind_from_name(c.strategy_kind);
  probe.strategy.fixed_I = c.fixed_i;
  probe.strategy.fixed_eps = c.fixed_eps;
  probe.time_model.uplink_bps = c.uplink_bps;
  probe.time_model.downlink_bps = c.downlink_bps;
  probe.time_model.per_step_compute_s = c.per_step_compute_s;
  probe.time_model.bits_per_param = c.bits_per_param;
  probe.time_model.bits_per_atom = c.bits_per_atom;
  probe.time_model.device_multipliers = c.device_multipliers;
  probe.validate();
  ControllerState ctrl;
  ctrl.I0 = c.i0;
  ctrl.eps0 = c.eps0;
  ctrl.I_min = c.i_min;
  ctrl.I_max = c.i_max;
  ctrl.eps_min = c.eps_min;
  ctrl.eps_max = c.eps_max;
  ctrl.F_w0 = 1.0;
  try {
    ctrl.validate();
  } catch (const std::domain_error& e) {
    throw config_error(std::string("config: ") + e.what());
  }
}

inline SimSettings to_sim_settings(const ExperimentConfig& c) {
  SimSettings s;
  s.seed = c.seed;
  s.num_clients = c.num_clients;
  s.model.arch = (c.model_arch == "mlp") ? ModelSpec::Arch::Mlp
                                         : ModelSpec::Arch::LogisticRegression;
  s.model.hidden = c.hidden;
  s.lr = c.lr;
  s.batch_size = c.batch_size;
  s.rounds = c.rounds;
  s.time_budget_s = c.time_budget_s;
  s.partition.kind = (c.partition_scheme == "non_iid") ? PartitionScheme::Kind::NonIID
                                                       : PartitionScheme::Kind::IID;
  s.partition.shards_per_client = c.shards_per_client;
  s.strategy.kind = StrategyConfig::kind_from_name(c.strategy_kind);
  s.strategy.fixed_I = c.fixed_i;
  s.strategy.fixed_eps = c.fixed_eps;
  s.strategy.controller = (c.controller_mode == "stationary")
                              ? StrategyConfig::ControllerMode::Stationary
                              : StrategyConfig::ControllerMode::CubeRoot;
  s.controller.I0 = c.i0;
  s.controller.eps0 = c.eps0;
  s.controller.I_min = c.i_min;
  s.controller.I_max = c.i_max;
  s.controller.eps_min = c.eps_min;
  s.controller.eps_max = c.eps_max;
  s.time_model.uplink_bps = c.uplink_bps;
  s.time_model.downlink_bps = c.downlink_bps;
  s.time_model.per_step_compute_s = c.per_step_compute_s;
  s.time_model.bits_per_param = c.bits_per_param;
  s.time_model.bits_per_atom = c.bits_per_atom;
  s.time_model.device_multipliers = c.device_multipliers;
  return s;
}

struct LoadedData {
  Dataset train;
  Dataset eval;
};

inline LoadedData load_datasets(const ExperimentConfig& c) {
  LoadedData d;
  if (c.dataset_kind == "synthetic") {
    SyntheticSpec spec;
    spec.num_examples = c.num_examples;
    spec.num_classes = c.num_classes;
    spec.feature_dim = c.feature_dim;
    spec.cluster_spread = c.cluster_spread;
    spec.pair_separation = c.pair_separation;
    spec.noise_anisotropy = c.noise_anisotropy;
    d.train = generate_synthetic(spec, c.seed, 0);
    spec.num_examples = c.eval_examples;
    d.eval = generate_synthetic(spec, c.seed, 1);
  } else {
    d.train = load_idx_dataset(c.train_images, c.train_labels);
    d.eval = load_idx_dataset(c.eval_images, c.eval_labels);
    if (d.train.feature_dim != d.eval.feature_dim)
      throw config_error("config: train/eval feature dimensions differ");
    const int classes = std::max(d.train.num_classes, d.eval.num_classes);
    d.train.num_classes = classes;
    d.eval.num_classes = classes;
  }
  return d;
}

}  // namespace eafo
