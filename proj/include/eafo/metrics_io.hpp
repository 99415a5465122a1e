// Metrics persistence: one record per round, append-only, flushed per round.
//
// CSV: '#'-prefixed lines echo the effective config, then a header row, then
// one row per round. JSON-lines: a meta object first, then one object per
// round with the same field set and order as the CSV columns. Doubles are
// written with round-trip precision so parse(write(x)) == x.

#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "eafo/errors.hpp"
#include "eafo/simulator.hpp"

namespace eafo {

struct MetricsRecord {
  RoundMetrics round;
  std::string strategy;
  std::string config_hash;

  bool operator==(const MetricsRecord& o) const {
    const RoundMetrics &a = round, &b = o.round;
    return a.round == b.round && a.global_loss == b.global_loss &&
           a.eval_loss == b.eval_loss && a.eval_accuracy == b.eval_accuracy &&
           a.I_t == b.I_t && a.eps_t == b.eps_t && a.raw_I == b.raw_I &&
           a.raw_eps == b.raw_eps && a.t_download_s == b.t_download_s &&
           a.t_compute_s == b.t_compute_s && a.t_upload_s == b.t_upload_s &&
           a.t_round_s == b.t_round_s && a.cumulative_time_s == b.cumulative_time_s &&
           a.bytes_up == b.bytes_up && a.bytes_down == b.bytes_down &&
           a.delta1_hat == b.delta1_hat && a.delta2_hat == b.delta2_hat &&
           a.L_hat == b.L_hat && a.drop_factor_var == b.drop_factor_var &&
           a.drop_factor_lr == b.drop_factor_lr && strategy == o.strategy &&
           config_hash == o.config_hash;
  }
};

namespace metrics {

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline const char* csv_header() {
  return "round,I_t,eps_t,raw_I,raw_eps,global_loss,eval_loss,eval_accuracy,"
         "t_download_s,t_compute_s,t_upload_s,t_round_s,cumulative_time_s,"
         "bytes_up,bytes_down,delta1_hat,delta2_hat,L_hat,drop_factor_var,"
         "drop_factor_lr,strategy,config_hash";
}

inline std::string to_csv_row(const MetricsRecord& r) {
  const RoundMetrics& m = r.round;
  std::ostringstream out;
  out << m.round << ',' << m.I_t << ',' << fmt(m.eps_t) << ',' << fmt(m.raw_I) << ','
      << fmt(m.raw_eps) << ',' << fmt(m.global_loss) << ',' << fmt(m.eval_loss) << ','
      << fmt(m.eval_accuracy) << ',' << fmt(m.t_download_s) << ',' << fmt(m.t_compute_s)
      << ',' << fmt(m.t_upload_s) << ',' << fmt(m.t_round_s) << ','
      << fmt(m.cumulative_time_s) << ',' << m.bytes_up << ',' << m.bytes_down << ','
      << fmt(m.delta1_hat) << ',' << fmt(m.delta2_hat) << ',' << fmt(m.L_hat) << ','
      << fmt(m.drop_factor_var) << ',' << fmt(m.drop_factor_lr) << ',' << r.strategy
      << ',' << r.config_hash;
  return out.str();
}

inline nlohmann::ordered_json to_json(const MetricsRecord& r) {
  const RoundMetrics& m = r.round;
  nlohmann::ordered_json j;
  j["round"] = m.round;
  j["I_t"] = m.I_t;
  j["eps_t"] = m.eps_t;
  j["raw_I"] = m.raw_I;
  j["raw_eps"] = m.raw_eps;
  j["global_loss"] = m.global_loss;
  j["eval_loss"] = m.eval_loss;
  j["eval_accuracy"] = m.eval_accuracy;
  j["t_download_s"] = m.t_download_s;
  j["t_compute_s"] = m.t_compute_s;
  j["t_upload_s"] = m.t_upload_s;
  j["t_round_s"] = m.t_round_s;
  j["cumulative_time_s"] = m.cumulative_time_s;
  j["bytes_up"] = m.bytes_up;
  j["bytes_down"] = m.bytes_down;
  j["delta1_hat"] = m.delta1_hat;
  j["delta2_hat"] = m.delta2_hat;
  j["L_hat"] = m.L_hat;
  j["drop_factor_var"] = m.drop_factor_var;
  j["drop_factor_lr"] = m.drop_factor_lr;
  j["strategy"] = r.strategy;
  j["config_hash"] = r.config_hash;
  return j;
}

inline MetricsRecord from_json(const nlohmann::json& j) {
  MetricsRecord r;
  RoundMetrics& m = r.round;
  m.round = j.at("round").get<int>();
  m.I_t = j.at("I_t").get<int>();
  m.eps_t = j.at("eps_t").get<double>();
  m.raw_I = j.at("raw_I").get<double>();
  m.raw_eps = j.at("raw_eps").get<double>();
  m.global_loss = j.at("global_loss").get<double>();
  m.eval_loss = j.at("eval_loss").get<double>();
  m.eval_accuracy = j.at("eval_accuracy").get<double>();
  m.t_download_s = j.at("t_download_s").get<double>();
  m.t_compute_s = j.at("t_compute_s").get<double>();
  m.t_upload_s = j.at("t_upload_s").get<double>();
  m.t_round_s = j.at("t_round_s").get<double>();
  m.cumulative_time_s = j.at("cumulative_time_s").get<double>();
  m.bytes_up = j.at("bytes_up").get<std::uint64_t>();
  m.bytes_down = j.at("bytes_down").get<std::uint64_t>();
  m.delta1_hat = j.at("delta1_hat").get<double>();
  m.delta2_hat = j.at("delta2_hat").get<double>();
  m.L_hat = j.at("L_hat").get<double>();
  m.drop_factor_var = j.at("drop_factor_var").get<double>();
  m.drop_factor_lr = j.at("drop_factor_lr").get<double>();
  r.strategy = j.at("strategy").get<std::string>();
  r.config_hash = j.at("config_hash").get<std::string>();
  return r;
}

inline MetricsRecord from_csv_row(const std::string& line) {
  std::vector<std::string> f;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, ',')) f.push_back(cur);
  if (f.size() != 22) throw parse_error("metrics: malformed CSV row: " + line);
  MetricsRecord r;
  RoundMetrics& m = r.round;
  std::size_t i = 0;
  m.round = std::stoi(f[i++]);
  m.I_t = std::stoi(f[i++]);
  m.eps_t = std::stod(f[i++]);
  m.raw_I = std::stod(f[i++]);
  m.raw_eps = std::stod(f[i++]);
  m.global_loss = std::stod(f[i++]);
  m.eval_loss = std::stod(f[i++]);
  m.eval_accuracy = std::stod(f[i++]);
  m.t_download_s = std::stod(f[i++]);
  m.t_compute_s = std::stod(f[i++]);
  m.t_upload_s = std::stod(f[i++]);
  m.t_round_s = std::stod(f[i++]);
  m.cumulative_time_s = std::stod(f[i++]);
  m.bytes_up = std::stoull(f[i++]);
  m.bytes_down = std::stoull(f[i++]);
  m.delta1_hat = std::stod(f[i++]);
  m.delta2_hat = std::stod(f[i++]);
  m.L_hat = std::stod(f[i++]);
  m.drop_factor_var = std::stod(f[i++]);
  m.drop_factor_lr = std::stod(f[i++]);
  r.strategy = f[i++];
  r.config_hash = f[i++];
  return r;
}

}  // namespace metrics

// Streams records to disk, flushing after every round so an interrupted run
// leaves a readable partial file.
class MetricsWriter : public RoundSink {
 public:
  MetricsWriter(const std::string& path, const std::string& format,
                const std::string& config_echo, std::string strategy,
                std::string hash)
      : format_(format), strategy_(std::move(strategy)), hash_(std::move(hash)) {
    if (format_ != "csv" && format_ != "jsonl")
      throw config_error("metrics: unknown format '" + format_ + "'");
    out_.open(path, std::ios::trunc);
    if (!out_) throw std::runtime_error("metrics: cannot open output file: " + path);
    if (format_ == "csv") {
      std::istringstream cfg(config_echo);
      std::string line;
      while (std::getline(cfg, line))
        if (!line.empty()) out_ << "# " << line << "\n";
      out_ << "# strategy = " << strategy_ << "\n";
      out_ << "# config_hash = " << hash_ << "\n";
      out_ << metrics::csv_header() << "\n";
    } else {
      nlohmann::ordered_json meta;
      meta["meta"] = "config";
      meta["strategy"] = strategy_;
      meta["config_hash"] = hash_;
      meta["config_text"] = config_echo;
      out_ << meta.dump() << "\n";
    }
    flush_or_throw();
  }

  void on_round(const RoundMetrics& m) override {
    MetricsRecord rec{m, strategy_, hash_};
    if (format_ == "csv")
      out_ << metrics::to_csv_row(rec) << "\n";
    else
      out_ << metrics::to_json(rec).dump() << "\n";
    flush_or_throw();
  }

 private:
  void flush_or_throw() {
    out_.flush();
    if (!out_) throw std::runtime_error("metrics: write failure");
  }

  std::ofstream out_;
  std::string format_;
  std::string strategy_;
  std::string hash_;
};

// Long-format view for plotting: one (time, metric, value, strategy) row per
// metric per round, consumable by standard charting tools without reshaping.
inline void write_long_format(const std::vector<MetricsRecord>& records,
                              std::ostream& out) {
  out << "time_s,metric,value,strategy\n";
  for (const auto& r : records) {
    const RoundMetrics& m = r.round;
    const std::pair<const char*, double> fields[] = {
        {"round", static_cast<double>(m.round)},
        {"I_t", static_cast<double>(m.I_t)},
        {"eps_t", m.eps_t},
        {"raw_I", m.raw_I},
        {"raw_eps", m.raw_eps},
        {"global_loss", m.global_loss},
        {"eval_loss", m.eval_loss},
        {"eval_accuracy", m.eval_accuracy},
        {"t_round_s", m.t_round_s},
        {"bytes_up", static_cast<double>(m.bytes_up)},
        {"bytes_down", static_cast<double>(m.bytes_down)},
    };
    for (const auto& [name, value] : fields)
      out << metrics::fmt(m.cumulative_time_s) << ',' << name << ','
          << metrics::fmt(value) << ',' << r.strategy << "\n";
  }
}

// Reads either format back; comment and meta lines are skipped.
inline std::vector<MetricsRecord> read_metrics_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("metrics: cannot open file: " + path);
  std::vector<MetricsRecord> out;
  std::string line;
  bool saw_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') continue;
    if (line[0] == '{') {
      const auto j = nlohmann::json::parse(line);
      if (j.contains("meta")) continue;
      out.push_back(metrics::from_json(j));
      continue;
    }
    if (!saw_header) {
      if (line != metrics::csv_header())
        throw parse_error("metrics: unexpected CSV header: " + line);
      saw_header = true;
      continue;
    }
    out.push_back(metrics::from_csv_row(line));
  }
  return out;
}

}  // namespace eafo
