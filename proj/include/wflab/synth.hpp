#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "wflab/error.hpp"
#include "wflab/rng.hpp"
#include "wflab/traffic.hpp"

namespace wflab {

struct SizeComponent {
  double mean_bytes = 0.0;
  double std_bytes = 0.0;
  double weight = 0.0;
};

struct SiteProfile {
  int site_label = 0;
  std::vector<SizeComponent> size_mixture;  // weights sum to 1
  double burst_len_geometric_p = 0.1;       // in (0, 1]
  double intra_burst_log_mean = 0.0, intra_burst_log_std = 0.0;  // log-normal, microseconds
  double inter_burst_log_mean = 0.0, inter_burst_log_std = 0.0;

  void validate() const {
    if (burst_len_geometric_p <= 0.0 || burst_len_geometric_p > 1.0)
      throw ConfigError("SiteProfile: burst p must be in (0, 1]");
    double w = 0.0;
    for (const auto& c : size_mixture) {
      if (c.std_bytes < 0.0) throw ConfigError("SiteProfile: negative std");
      w += c.weight;
    }
    if (size_mixture.empty() || std::abs(w - 1.0) > 1e-9)
      throw ConfigError("SiteProfile: mixture weights must sum to 1");
  }
};

struct EnvProfile {
  int env_id = 0;
  double latency_scale = 1.0;   // multiplies all jitters
  int mtu_cap = 9000;           // bytes, >= 64
  double size_scale = 1.0;
  double jitter_noise_std = 0.0;  // additive log-space noise
  double cpu_slowdown = 1.0;      // multiplies inter-burst jitter, >= 1

  void validate() const {
    if (latency_scale <= 0.0) throw ConfigError("EnvProfile: latency_scale must be > 0");
    if (mtu_cap < 64) throw ConfigError("EnvProfile: mtu_cap must be >= 64");
    if (size_scale <= 0.0) throw ConfigError("EnvProfile: size_scale must be > 0");
    if (cpu_slowdown < 1.0) throw ConfigError("EnvProfile: cpu_slowdown must be >= 1");
  }
};

struct SynthConfig {
  std::vector<SiteProfile> sites;
  std::vector<EnvProfile> envs;
  int packets_per_trace = 4000;
  int traces_per_site_env = 2;
  std::uint64_t master_seed = 1;

  void validate() const {
    if (sites.empty() || envs.empty()) throw ConfigError("SynthConfig: need >= 1 site and env");
    if (packets_per_trace < 1) throw ConfigError("SynthConfig: packets_per_trace must be >= 1");
    if (traces_per_site_env < 1) throw ConfigError("SynthConfig: traces_per_site_env must be >= 1");
    for (const auto& s : sites) s.validate();
    for (const auto& e : envs) e.validate();
  }
};

// Burst-structured trace: burst lengths are geometric, sizes come from the
// site's mixture (scaled and MTU-clamped by the environment), jitters are
// log-normal with separate intra/inter-burst parameters. All timing is
// scaled by latency_scale; inter-burst gaps additionally by cpu_slowdown.
inline Trace generate_trace(const SiteProfile& site, const EnvProfile& env, int n_packets,
                            std::uint64_t seed) {
  site.validate();
  env.validate();
  Trace trace;
  trace.site_label = site.site_label;
  trace.env_id = env.env_id;
  trace.packets.reserve(static_cast<size_t>(n_packets));
  Rng rng(seed);
  double t = 0.0;
  int emitted = 0;
  while (emitted < n_packets) {
    auto burst_len = rng.geometric(site.burst_len_geometric_p);
    for (std::uint64_t j = 0; j < burst_len && emitted < n_packets; ++j) {
      double jitter = 0.0;
      if (emitted > 0) {
        bool inter = (j == 0);
        double log_mean = inter ? site.inter_burst_log_mean : site.intra_burst_log_mean;
        double log_std = inter ? site.inter_burst_log_std : site.intra_burst_log_std;
        if (env.jitter_noise_std > 0.0) log_mean += rng.normal(0.0, env.jitter_noise_std);
        jitter = rng.lognormal(log_mean, log_std) * env.latency_scale;
        if (inter) jitter *= env.cpu_slowdown;
      }
      // mixture component by cumulative weight
      double u = rng.uniform();
      const SizeComponent* comp = &site.size_mixture.back();
      double acc = 0.0;
      for (const auto& c : site.size_mixture) {
        acc += c.weight;
        if (u < acc) {
          comp = &c;
          break;
        }
      }
      double size = rng.normal(comp->mean_bytes, comp->std_bytes) * env.size_scale;
      size = std::round(size);
      size = std::max(64.0, std::min(static_cast<double>(env.mtu_cap), size));
      t += jitter;
      trace.packets.push_back({t, size});
      ++emitted;
    }
  }
  return trace;
}

// Defaults anchored to desk-scale realism: per-env mean packet sizes land
// around 1.2-2.7 kB and mean inter-packet intervals around 2.6-10.9 ms,
// with latency scales spanning >= 3x so environments are separable.
inline SynthConfig default_corpus(int n_sites, int n_envs, std::uint64_t master_seed) {
  if (n_sites < 1 || n_sites > 64) throw ConfigError("default_corpus: n_sites must be in [1, 64]");
  if (n_envs < 1 || n_envs > 16) throw ConfigError("default_corpus: n_envs must be in [1, 16]");
  SynthConfig cfg;
  cfg.master_seed = master_seed;
  Rng rng(mix_seed(master_seed, 0xC0F));
  for (int i = 0; i < n_sites; ++i) {
    SiteProfile s;
    s.site_label = i;
    double frac = n_sites > 1 ? static_cast<double>(i) / (n_sites - 1) : 0.5;
    double data_mean = 1100.0 + 1500.0 * frac + rng.uniform(-20.0, 20.0);
    double ctrl_mean = 80.0 + 140.0 * rng.uniform();
    double ctrl_weight = 0.20 + 0.15 * rng.uniform();
    s.size_mixture = {{data_mean, 130.0 + 40.0 * rng.uniform(), 1.0 - ctrl_weight},
                      {ctrl_mean, 18.0, ctrl_weight}};
    s.burst_len_geometric_p = 0.08 + 0.14 * rng.uniform();
    double intra_mean = 380.0 + 420.0 * rng.uniform();  // microseconds
    double intra_sigma = 0.55;
    s.intra_burst_log_mean = std::log(intra_mean) - 0.5 * intra_sigma * intra_sigma;
    s.intra_burst_log_std = intra_sigma;
    // inter-burst gap sized so the site's overall mean interval sits near
    // 2.8 ms at latency_scale 1
    double p = s.burst_len_geometric_p;
    double target_mean = 2800.0;
    double inter_mean = (target_mean - (1.0 - p) * intra_mean) / p;
    double inter_sigma = 0.75;
    s.inter_burst_log_mean = std::log(inter_mean) - 0.5 * inter_sigma * inter_sigma;
    s.inter_burst_log_std = inter_sigma;
    cfg.sites.push_back(s);
  }
  for (int e = 0; e < n_envs; ++e) {
    EnvProfile env;
    env.env_id = e;
    double frac = n_envs > 1 ? static_cast<double>(e) / (n_envs - 1) : 0.0;
    env.latency_scale = std::pow(3.5, frac);  // 1x .. 3.5x
    env.size_scale = 1.0 + 0.3 * frac;
    env.mtu_cap = 9000 - 600 * (e % 4);
    env.jitter_noise_std = 0.03 + 0.02 * (e % 3);
    env.cpu_slowdown = 1.0 + 0.1 * (e % 2);
    cfg.envs.push_back(env);
  }
  return cfg;
}

// Per-trace seeds derive from (master, site, env, index), so any subset of
// a corpus is reproducible independently of the rest.
inline std::vector<Trace> generate_corpus(const SynthConfig& cfg) {
  cfg.validate();
  std::vector<Trace> traces;
  traces.reserve(cfg.sites.size() * cfg.envs.size() *
                 static_cast<size_t>(cfg.traces_per_site_env));
  for (const auto& site : cfg.sites) {
    for (const auto& env : cfg.envs) {
      for (int i = 0; i < cfg.traces_per_site_env; ++i) {
        std::uint64_t seed = mix_seed(cfg.master_seed, static_cast<std::uint64_t>(site.site_label),
                                      static_cast<std::uint64_t>(env.env_id),
                                      static_cast<std::uint64_t>(i));
        traces.push_back(generate_trace(site, env, cfg.packets_per_trace, seed));
      }
    }
  }
  return traces;
}

// --- human-editable config serialization -----------------------------------

inline std::string to_text(const SynthConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  out << "master_seed = " << cfg.master_seed << "\n";
  out << "packets_per_trace = " << cfg.packets_per_trace << "\n";
  out << "traces_per_site_env = " << cfg.traces_per_site_env << "\n";
  for (const auto& s : cfg.sites) {
    out << "[site]\n";
    out << "label = " << s.site_label << "\n";
    out << "size_mixture =";
    for (size_t i = 0; i < s.size_mixture.size(); ++i) {
      const auto& c = s.size_mixture[i];
      out << (i ? "," : "") << " " << c.mean_bytes << ":" << c.std_bytes << ":" << c.weight;
    }
    out << "\n";
    out << "burst_p = " << s.burst_len_geometric_p << "\n";
    out << "intra_jitter = " << s.intra_burst_log_mean << ":" << s.intra_burst_log_std << "\n";
    out << "inter_jitter = " << s.inter_burst_log_mean << ":" << s.inter_burst_log_std << "\n";
  }
  for (const auto& e : cfg.envs) {
    out << "[env]\n";
    out << "env_id = " << e.env_id << "\n";
    out << "latency_scale = " << e.latency_scale << "\n";
    out << "mtu_cap = " << e.mtu_cap << "\n";
    out << "size_scale = " << e.size_scale << "\n";
    out << "jitter_noise_std = " << e.jitter_noise_std << "\n";
    out << "cpu_slowdown = " << e.cpu_slowdown << "\n";
  }
  return out.str();
}

namespace detail {

inline std::vector<double> parse_colon_tuple(const std::string& s, const std::string& key) {
  std::vector<double> out;
  std::istringstream in(s);
  std::string part;
  while (std::getline(in, part, ':')) {
    try {
      out.push_back(std::stod(part));
    } catch (const std::exception&) {
      throw ConfigError("synth config: bad value for " + key + ": " + s);
    }
  }
  return out;
}

}  // namespace detail

inline SynthConfig parse_synth_config(std::istream& in) {
  SynthConfig cfg;
  cfg.sites.clear();
  cfg.envs.clear();
  enum class Section { Top, Site, Env } section = Section::Top;
  std::string line;
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
    if (line == "[site]") {
      cfg.sites.emplace_back();
      section = Section::Site;
      continue;
    }
    if (line == "[env]") {
      cfg.envs.emplace_back();
      section = Section::Env;
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("synth config: expected key = value at line " + std::to_string(lineno));
    std::string key = line.substr(0, line.find_last_not_of(" \t", eq - 1) + 1);
    std::string value = line.substr(line.find_first_not_of(" \t", eq + 1));
    auto num = [&](const std::string& v) {
      try {
        return std::stod(v);
      } catch (const std::exception&) {
        throw ConfigError("synth config: bad number for " + key + " at line " +
                          std::to_string(lineno));
      }
    };
    if (section == Section::Top) {
      if (key == "master_seed")
        cfg.master_seed = static_cast<std::uint64_t>(std::stoull(value));
      else if (key == "packets_per_trace")
        cfg.packets_per_trace = static_cast<int>(num(value));
      else if (key == "traces_per_site_env")
        cfg.traces_per_site_env = static_cast<int>(num(value));
      else
        throw ConfigError("synth config: unknown key '" + key + "' at line " +
                          std::to_string(lineno));
    } else if (section == Section::Site) {
      auto& s = cfg.sites.back();
      if (key == "label")
        s.site_label = static_cast<int>(num(value));
      else if (key == "size_mixture") {
        s.size_mixture.clear();
        std::istringstream items(value);
        std::string item;
        while (std::getline(items, item, ',')) {
          auto t = detail::parse_colon_tuple(item, key);
          if (t.size() != 3)
            throw ConfigError("synth config: size_mixture items need mean:std:weight");
          s.size_mixture.push_back({t[0], t[1], t[2]});
        }
      } else if (key == "burst_p")
        s.burst_len_geometric_p = num(value);
      else if (key == "intra_jitter") {
        auto t = detail::parse_colon_tuple(value, key);
        if (t.size() != 2) throw ConfigError("synth config: intra_jitter needs logmean:logstd");
        s.intra_burst_log_mean = t[0];
        s.intra_burst_log_std = t[1];
      } else if (key == "inter_jitter") {
        auto t = detail::parse_colon_tuple(value, key);
        if (t.size() != 2) throw ConfigError("synth config: inter_jitter needs logmean:logstd");
        s.inter_burst_log_mean = t[0];
        s.inter_burst_log_std = t[1];
      } else
        throw ConfigError("synth config: unknown site key '" + key + "' at line " +
                          std::to_string(lineno));
    } else {
      auto& e = cfg.envs.back();
      if (key == "env_id")
        e.env_id = static_cast<int>(num(value));
      else if (key == "latency_scale")
        e.latency_scale = num(value);
      else if (key == "mtu_cap")
        e.mtu_cap = static_cast<int>(num(value));
      else if (key == "size_scale")
        e.size_scale = num(value);
      else if (key == "jitter_noise_std")
        e.jitter_noise_std = num(value);
      else if (key == "cpu_slowdown")
        e.cpu_slowdown = num(value);
      else
        throw ConfigError("synth config: unknown env key '" + key + "' at line " +
                          std::to_string(lineno));
    }
  }
  return cfg;
}

inline SynthConfig parse_synth_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("synth config: cannot open " + path);
  return parse_synth_config(in);
}

}  // namespace wflab
