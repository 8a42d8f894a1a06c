#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "wflab/defenses.hpp"
#include "wflab/domain.hpp"
#include "wflab/error.hpp"
#include "wflab/model.hpp"
#include "wflab/network.hpp"
#include "wflab/synth.hpp"

namespace wflab {

struct SynthSection {
  int n_sites = 10;
  int n_envs = 1;
  int packets_per_trace = 4000;
  int traces_per_site_env = 4;
  std::uint64_t master_seed = 0;  // 0: fall back to the global seed
  std::string profile_file;      // full SynthConfig overrides the knobs above
  int window = kWindowLen;
  int stride = 0;  // 0: non-overlapping
};

struct ModelSection {
  Preset preset = Preset::Tiny;
  int classes = 0;  // 0: infer from data
  int domains = 0;
};

struct TrainSection {
  TrainConfig cfg;
};

struct DaSection {
  DAConfig cfg;
};

struct DefenseSection {
  DefenseConfig cfg;
  DefendMode mode = DefendMode::TrainAndTest;
  int pool_patterns = 16;
  int pool_count_per_pattern = 50;
};

struct ExperimentSection {
  std::string kind;  // cross-domain | learning-curve | website-scaling | ablation | defense-curve
  std::vector<int> sizes;
  std::vector<int> counts;
  int target_env = -1;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir;
  SynthSection synth;
  ModelSection model;
  TrainSection train;
  DaSection da;
  DefenseSection defense;
  ExperimentSection experiment;

  std::string to_text() const;
};

namespace detail {

struct KeyValue {
  std::string section, key, value;
  int line = 0;
};

inline std::vector<KeyValue> parse_kv_stream(std::istream& in) {
  std::vector<KeyValue> out;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    auto last = line.find_last_not_of(" \t");
    line = line.substr(first, last - first + 1);
    if (line.front() == '[' && line.back() == ']') {
      section = line.substr(1, line.size() - 2);
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: expected key = value at line " + std::to_string(lineno));
    KeyValue kv;
    kv.section = section;
    kv.key = line.substr(0, line.find_last_not_of(" \t", eq - 1) + 1);
    auto vstart = line.find_first_not_of(" \t", eq + 1);
    kv.value = vstart == std::string::npos ? "" : line.substr(vstart);
    kv.line = lineno;
    out.push_back(kv);
  }
  return out;
}

inline std::vector<int> parse_int_list(const std::string& v) {
  std::vector<int> out;
  std::istringstream items(v);
  std::string item;
  while (std::getline(items, item, ','))
    if (item.find_first_not_of(" \t") != std::string::npos) out.push_back(std::stoi(item));
  return out;
}

}  // namespace detail

inline RunConfig parse_run_config(std::istream& in) {
  RunConfig cfg;
  for (const auto& kv : detail::parse_kv_stream(in)) {
    auto bad = [&]() {
      throw ConfigError("config: unknown key '" + kv.key + "' in section [" + kv.section +
                        "] at line " + std::to_string(kv.line));
    };
    auto num = [&](const std::string& v) {
      try {
        return std::stod(v);
      } catch (const std::exception&) {
        throw ConfigError("config: bad number for " + kv.key + " at line " +
                          std::to_string(kv.line));
      }
    };
    if (kv.section.empty()) {
      if (kv.key == "seed")
        cfg.seed = std::stoull(kv.value);
      else if (kv.key == "out")
        cfg.out_dir = kv.value;
      else
        bad();
    } else if (kv.section == "synth") {
      if (kv.key == "n_sites")
        cfg.synth.n_sites = static_cast<int>(num(kv.value));
      else if (kv.key == "n_envs")
        cfg.synth.n_envs = static_cast<int>(num(kv.value));
      else if (kv.key == "packets_per_trace")
        cfg.synth.packets_per_trace = static_cast<int>(num(kv.value));
      else if (kv.key == "traces_per_site_env")
        cfg.synth.traces_per_site_env = static_cast<int>(num(kv.value));
      else if (kv.key == "master_seed")
        cfg.synth.master_seed = std::stoull(kv.value);
      else if (kv.key == "profile_file")
        cfg.synth.profile_file = kv.value;
      else if (kv.key == "window")
        cfg.synth.window = static_cast<int>(num(kv.value));
      else if (kv.key == "stride")
        cfg.synth.stride = static_cast<int>(num(kv.value));
      else
        bad();
    } else if (kv.section == "model") {
      if (kv.key == "preset")
        cfg.model.preset = preset_from_string(kv.value);
      else if (kv.key == "classes")
        cfg.model.classes = static_cast<int>(num(kv.value));
      else if (kv.key == "domains")
        cfg.model.domains = static_cast<int>(num(kv.value));
      else
        bad();
    } else if (kv.section == "train") {
      auto& t = cfg.train.cfg;
      if (kv.key == "epochs")
        t.epochs = static_cast<int>(num(kv.value));
      else if (kv.key == "batch_size")
        t.batch_size = static_cast<int>(num(kv.value));
      else if (kv.key == "patience")
        t.patience = static_cast<int>(num(kv.value));
      else if (kv.key == "mask")
        t.mask = channel_mask_from_string(kv.value);
      else if (kv.key == "optimizer") {
        if (kv.value == "adam")
          t.optimizer.kind = OptimizerKind::Adam;
        else if (kv.value == "sgd")
          t.optimizer.kind = OptimizerKind::SgdMomentum;
        else
          throw ConfigError("config: unknown optimizer " + kv.value);
      } else if (kv.key == "lr")
        t.optimizer.lr = num(kv.value);
      else if (kv.key == "momentum")
        t.optimizer.momentum = num(kv.value);
      else
        bad();
    } else if (kv.section == "da") {
      auto& d = cfg.da.cfg;
      if (kv.key == "lambda_d")
        d.lambda_d = num(kv.value);
      else if (kv.key == "domain_mode") {
        if (kv.value == "binary")
          d.mode = DomainMode::Binary;
        else if (kv.value == "multi-index")
          d.mode = DomainMode::MultiIndex;
        else
          throw ConfigError("config: unknown domain_mode " + kv.value);
      } else if (kv.key == "domain_count")
        d.domain_count = static_cast<int>(num(kv.value));
      else if (kv.key == "lambda_ramp") {
        // start:end:epochs, epochs 0 = first third of training
        std::istringstream parts(kv.value);
        std::string p;
        std::vector<double> vals;
        while (std::getline(parts, p, ':')) vals.push_back(num(p));
        if (vals.size() != 3) throw ConfigError("config: lambda_ramp needs start:end:epochs");
        d.schedule.ramp = true;
        d.schedule.start = vals[0];
        d.schedule.end = vals[1];
        d.schedule.ramp_epochs = static_cast<int>(vals[2]);
      } else if (kv.key == "lambda_constant") {
        d.schedule.ramp = false;
        d.schedule.end = num(kv.value);
      } else
        bad();
    } else if (kv.section == "defense") {
      auto& d = cfg.defense;
      if (kv.key == "kind") {
        if (kv.value == "inflation")
          d.cfg.kind = DefenseConfig::Kind::Inflation;
        else if (kv.value == "injection")
          d.cfg.kind = DefenseConfig::Kind::Injection;
        else
          throw ConfigError("config: unknown defense kind " + kv.value);
      } else if (kv.key == "a")
        d.cfg.inflation.coefficient = num(kv.value);
      else if (kv.key == "basis") {
        if (kv.value == "mean")
          d.cfg.inflation.basis = InflationBasis::Mean;
        else if (kv.value == "stddev")
          d.cfg.inflation.basis = InflationBasis::Stddev;
        else
          throw ConfigError("config: unknown basis " + kv.value);
      } else if (kv.key == "targets") {
        if (kv.value == "jitter")
          d.cfg.inflation.targets = InflationTargets::Jitter;
        else if (kv.value == "size")
          d.cfg.inflation.targets = InflationTargets::Size;
        else if (kv.value == "both")
          d.cfg.inflation.targets = InflationTargets::Both;
        else
          throw ConfigError("config: unknown targets " + kv.value);
      } else if (kv.key == "k")
        d.cfg.injection.packets_per_span = static_cast<int>(num(kv.value));
      else if (kv.key == "span")
        d.cfg.injection.span = static_cast<int>(num(kv.value));
      else if (kv.key == "rotation") {
        if (kv.value == "per-trace")
          d.cfg.injection.rotation = TriggerRotation::PerTrace;
        else if (kv.value == "per-day-simulated")
          d.cfg.injection.rotation = TriggerRotation::PerDaySimulated;
        else
          throw ConfigError("config: unknown rotation " + kv.value);
      } else if (kv.key == "pool_patterns")
        d.pool_patterns = static_cast<int>(num(kv.value));
      else if (kv.key == "pool_count_per_pattern")
        d.pool_count_per_pattern = static_cast<int>(num(kv.value));
      else if (kv.key == "mode") {
        if (kv.value == "both" || kv.value == "train+test")
          d.mode = DefendMode::TrainAndTest;
        else if (kv.value == "test-only")
          d.mode = DefendMode::TestOnly;
        else
          throw ConfigError("config: unknown defend mode " + kv.value);
      } else
        bad();
    } else if (kv.section == "experiment") {
      auto& e = cfg.experiment;
      if (kv.key == "kind")
        e.kind = kv.value;
      else if (kv.key == "sizes")
        e.sizes = detail::parse_int_list(kv.value);
      else if (kv.key == "counts")
        e.counts = detail::parse_int_list(kv.value);
      else if (kv.key == "target_env")
        e.target_env = static_cast<int>(num(kv.value));
      else
        bad();
    } else {
      throw ConfigError("config: unknown section [" + kv.section + "] at line " +
                        std::to_string(kv.line));
    }
  }
  return cfg;
}

inline RunConfig parse_run_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  return parse_run_config(in);
}

inline std::string RunConfig::to_text() const {
  std::ostringstream out;
  out << "seed = " << seed << "\n";
  if (!out_dir.empty()) out << "out = " << out_dir << "\n";
  out << "[synth]\n";
  out << "n_sites = " << synth.n_sites << "\n";
  out << "n_envs = " << synth.n_envs << "\n";
  out << "packets_per_trace = " << synth.packets_per_trace << "\n";
  out << "traces_per_site_env = " << synth.traces_per_site_env << "\n";
  out << "master_seed = " << synth.master_seed << "\n";
  if (!synth.profile_file.empty()) out << "profile_file = " << synth.profile_file << "\n";
  out << "window = " << synth.window << "\n";
  out << "stride = " << synth.stride << "\n";
  out << "[model]\n";
  out << "preset = " << wflab::to_string(model.preset) << "\n";
  out << "classes = " << model.classes << "\n";
  out << "domains = " << model.domains << "\n";
  out << "[train]\n";
  out << "epochs = " << train.cfg.epochs << "\n";
  out << "batch_size = " << train.cfg.batch_size << "\n";
  out << "patience = " << train.cfg.patience << "\n";
  out << "mask = " << wflab::to_string(train.cfg.mask) << "\n";
  out << "optimizer = "
      << (train.cfg.optimizer.kind == OptimizerKind::Adam ? "adam" : "sgd") << "\n";
  out << "lr = " << train.cfg.optimizer.lr << "\n";
  out << "momentum = " << train.cfg.optimizer.momentum << "\n";
  out << "[da]\n";
  out << "lambda_d = " << da.cfg.lambda_d << "\n";
  out << "domain_mode = " << (da.cfg.mode == DomainMode::Binary ? "binary" : "multi-index")
      << "\n";
  out << "domain_count = " << da.cfg.domain_count << "\n";
  if (da.cfg.schedule.ramp)
    out << "lambda_ramp = " << da.cfg.schedule.start << ":" << da.cfg.schedule.end << ":"
        << da.cfg.schedule.ramp_epochs << "\n";
  else
    out << "lambda_constant = " << da.cfg.schedule.end << "\n";
  out << "[defense]\n";
  out << "kind = "
      << (defense.cfg.kind == DefenseConfig::Kind::Inflation ? "inflation" : "injection")
      << "\n";
  out << "a = " << defense.cfg.inflation.coefficient << "\n";
  out << "basis = " << (defense.cfg.inflation.basis == InflationBasis::Mean ? "mean" : "stddev")
      << "\n";
  out << "targets = "
      << (defense.cfg.inflation.targets == InflationTargets::Both
              ? "both"
              : defense.cfg.inflation.targets == InflationTargets::Jitter ? "jitter" : "size")
      << "\n";
  out << "k = " << defense.cfg.injection.packets_per_span << "\n";
  out << "span = " << defense.cfg.injection.span << "\n";
  out << "rotation = "
      << (defense.cfg.injection.rotation == TriggerRotation::PerTrace ? "per-trace"
                                                                      : "per-day-simulated")
      << "\n";
  out << "pool_patterns = " << defense.pool_patterns << "\n";
  out << "pool_count_per_pattern = " << defense.pool_count_per_pattern << "\n";
  out << "mode = " << (defense.mode == DefendMode::TrainAndTest ? "both" : "test-only") << "\n";
  if (!experiment.kind.empty()) {
    out << "[experiment]\n";
    out << "kind = " << experiment.kind << "\n";
    if (!experiment.sizes.empty()) {
      out << "sizes =";
      for (size_t i = 0; i < experiment.sizes.size(); ++i)
        out << (i ? "," : "") << " " << experiment.sizes[i];
      out << "\n";
    }
    if (!experiment.counts.empty()) {
      out << "counts =";
      for (size_t i = 0; i < experiment.counts.size(); ++i)
        out << (i ? "," : "") << " " << experiment.counts[i];
      out << "\n";
    }
    if (experiment.target_env >= 0) out << "target_env = " << experiment.target_env << "\n";
  }
  return out.str();
}

}  // namespace wflab
