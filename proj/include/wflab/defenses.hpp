#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "wflab/error.hpp"
#include "wflab/rng.hpp"
#include "wflab/traffic.hpp"

namespace wflab {

enum class InflationBasis { Mean, Stddev };
enum class InflationTargets { Jitter, Size, Both };
enum class TriggerRotation { PerTrace, PerDaySimulated };

struct InflationConfig {
  double coefficient = 0.0;  // the sweep uses {15,20,25,30,40,50,60,70,80,90}
  InflationBasis basis = InflationBasis::Mean;
  InflationTargets targets = InflationTargets::Both;
  std::uint64_t seed = 1;
};

struct TriggerPattern {
  int pattern_id = 0;
  std::vector<int> sizes_bytes;  // constant per pattern, nominally in [50, 250]
};

struct InjectionConfig {
  int packets_per_span = 0;  // k, from {10, 25, 35, 40, 50} or custom
  int span = 500;            // original packets between insertions
  std::vector<TriggerPattern> pool;
  TriggerRotation rotation = TriggerRotation::PerTrace;
  std::uint64_t seed = 1;
  // rotation schedule key; shared across traces so the same (epoch_tag,
  // site) always picks the same pattern in PerDaySimulated mode
  std::uint64_t rotation_seed = 0x9e3779b9;
};

struct OverheadReport {
  double delay_multiplier = 1.0;  // defended duration / original duration
  double byte_overhead = 0.0;     // added bytes / original bytes
  double packet_overhead = 0.0;   // added packets / original packets
};

namespace detail {

inline double trace_mean_jitter(const std::vector<double>& jitter) {
  double s = 0.0;
  for (double j : jitter) s += j;
  return s / static_cast<double>(jitter.size());
}

inline double basis_value(const std::vector<double>& values, InflationBasis basis) {
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (basis == InflationBasis::Mean) return mean;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(values.size()));
}

inline double trace_duration(const Trace& t) {
  return t.packets.back().timestamp_us - t.packets.front().timestamp_us;
}

inline double trace_bytes(const Trace& t) {
  double s = 0.0;
  for (const auto& p : t.packets) s += p.size_bytes;
  return s;
}

}  // namespace detail

// Inflation: every targeted packet's jitter gains an independent uniform
// draw in [0, a*basis(jitter)] and/or its size gains uniform in
// [0, a*basis(size)] rounded up to whole bytes. Timestamps are rebuilt as
// the cumulative sum of the defended jitters.
inline std::pair<Trace, OverheadReport> apply_inflation(const Trace& trace,
                                                        const InflationConfig& cfg) {
  if (trace.packets.empty()) throw DataError("apply_inflation: empty trace");
  if (cfg.coefficient < 0.0) throw ConfigError("apply_inflation: coefficient must be >= 0");
  std::vector<double> jitter = compute_jitter(trace);
  std::vector<double> sizes(trace.packets.size());
  for (size_t i = 0; i < sizes.size(); ++i) sizes[i] = trace.packets[i].size_bytes;
  bool inflate_jitter = cfg.targets != InflationTargets::Size;
  bool inflate_size = cfg.targets != InflationTargets::Jitter;
  double x_jitter = cfg.coefficient * detail::basis_value(jitter, cfg.basis);
  double x_size = cfg.coefficient * detail::basis_value(sizes, cfg.basis);

  Rng rng(cfg.seed);
  Trace out = trace;
  double t = trace.packets.front().timestamp_us;
  for (size_t i = 0; i < out.packets.size(); ++i) {
    double j = jitter[i];
    if (inflate_jitter && cfg.coefficient > 0.0) j += rng.uniform(0.0, x_jitter);
    if (inflate_size && cfg.coefficient > 0.0)
      out.packets[i].size_bytes += std::ceil(rng.uniform(0.0, x_size));
    if (i > 0) t += j;
    out.packets[i].timestamp_us = t;
  }
  OverheadReport report;
  double orig_dur = detail::trace_duration(trace);
  double new_dur = detail::trace_duration(out);
  report.delay_multiplier = orig_dur > 0.0 ? new_dur / orig_dur : 1.0;
  double orig_bytes = detail::trace_bytes(trace);
  report.byte_overhead = orig_bytes > 0.0 ? (detail::trace_bytes(out) - orig_bytes) / orig_bytes : 0.0;
  report.packet_overhead = 0.0;
  return {std::move(out), report};
}

// Deterministic pool of distinct trigger patterns; sizes constant within a
// pattern, drawn from size_range. Collisions re-draw.
inline std::vector<TriggerPattern> make_trigger_pool(int n_patterns, int count_per_pattern,
                                                     int size_lo = 50, int size_hi = 250,
                                                     std::uint64_t seed = 1) {
  if (n_patterns < 1 || count_per_pattern < 1)
    throw ConfigError("make_trigger_pool: need >= 1 pattern and >= 1 packet");
  if (size_lo > size_hi) throw ConfigError("make_trigger_pool: bad size range");
  Rng rng(mix_seed(seed, 0x7516));
  std::vector<TriggerPattern> pool;
  std::vector<int> used_sizes;
  for (int i = 0; i < n_patterns; ++i) {
    TriggerPattern p;
    p.pattern_id = i;
    int size = 0;
    do {
      size = size_lo + static_cast<int>(rng.uniform_index(
                           static_cast<std::uint64_t>(size_hi - size_lo + 1)));
    } while (std::find(used_sizes.begin(), used_sizes.end(), size) != used_sizes.end() &&
             size_hi - size_lo + 1 > n_patterns);
    used_sizes.push_back(size);
    p.sizes_bytes.assign(static_cast<size_t>(count_per_pattern), size);
    pool.push_back(std::move(p));
  }
  return pool;
}

// Active Injection: after every complete span of original packets, a pool
// pattern is inserted as k packets (cycled/truncated to k); each injected
// packet's jitter is uniform in [0, mean original jitter], shifting all
// downstream packets. PerDaySimulated rotation keys the pattern choice on
// (epoch_tag, site_label), modeling endpoints that rotate their trigger on
// a schedule; PerTrace draws a fresh pattern per insertion.
inline std::pair<Trace, OverheadReport> apply_injection(const Trace& trace,
                                                        const InjectionConfig& cfg) {
  if (trace.packets.empty()) throw DataError("apply_injection: empty trace");
  if (cfg.packets_per_span < 0) throw ConfigError("apply_injection: k must be >= 0");
  if (cfg.span < 1) throw ConfigError("apply_injection: span must be >= 1");
  if (cfg.packets_per_span > 0 && cfg.pool.empty())
    throw ConfigError("apply_injection: k > 0 requires a non-empty trigger pool");

  OverheadReport report;
  if (cfg.packets_per_span == 0) return {trace, report};

  std::vector<double> jitter = compute_jitter(trace);
  double mean_jitter = detail::trace_mean_jitter(jitter);
  Rng rng(cfg.seed);
  std::uint64_t day_key = mix_seed(cfg.rotation_seed, fnv1a64(trace.epoch_tag),
                                   static_cast<std::uint64_t>(trace.site_label));

  Trace out = trace;
  out.packets.clear();
  long n = static_cast<long>(trace.packets.size());
  double shift = 0.0;
  double added_bytes = 0.0;
  long added_packets = 0;
  for (long i = 0; i < n; ++i) {
    out.packets.push_back(
        {trace.packets[static_cast<size_t>(i)].timestamp_us + shift,
         trace.packets[static_cast<size_t>(i)].size_bytes});
    if ((i + 1) % cfg.span == 0) {
      size_t pattern_idx =
          cfg.rotation == TriggerRotation::PerDaySimulated
              ? static_cast<size_t>(day_key % cfg.pool.size())
              : static_cast<size_t>(rng.uniform_index(cfg.pool.size()));
      const TriggerPattern& pattern = cfg.pool[pattern_idx];
      double t = out.packets.back().timestamp_us;
      for (int k = 0; k < cfg.packets_per_span; ++k) {
        double j = rng.uniform(0.0, mean_jitter);
        t += j;
        shift += j;
        double size = pattern.sizes_bytes[static_cast<size_t>(k) % pattern.sizes_bytes.size()];
        out.packets.push_back({t, size});
        added_bytes += size;
        ++added_packets;
      }
    }
  }
  double orig_dur = detail::trace_duration(trace);
  double new_dur = detail::trace_duration(out);
  report.delay_multiplier = orig_dur > 0.0 ? new_dur / orig_dur : 1.0;
  double orig_bytes = detail::trace_bytes(trace);
  report.byte_overhead = orig_bytes > 0.0 ? added_bytes / orig_bytes : 0.0;
  report.packet_overhead = static_cast<double>(added_packets) / static_cast<double>(n);
  return {std::move(out), report};
}

enum class DefendMode { TrainAndTest, TestOnly };

struct DefenseOutcome {
  std::vector<Trace> traces;
  OverheadReport mean_overhead;
};

namespace detail {

inline std::uint64_t trace_content_key(const Trace& t) {
  // stable per-trace key independent of the trace's position in the corpus
  std::uint64_t h = mix_seed(static_cast<std::uint64_t>(t.site_label),
                             static_cast<std::uint64_t>(t.env_id), fnv1a64(t.epoch_tag));
  size_t probe = std::min<size_t>(t.packets.size(), 32);
  for (size_t i = 0; i < probe; ++i) {
    h = mix_seed(h, static_cast<std::uint64_t>(t.packets[i].size_bytes),
                 static_cast<std::uint64_t>(t.packets[i].timestamp_us));
  }
  return mix_seed(h, static_cast<std::uint64_t>(t.packets.size()));
}

}  // namespace detail

struct DefenseConfig {
  enum class Kind { Inflation, Injection } kind = Kind::Inflation;
  InflationConfig inflation;
  InjectionConfig injection;
};

// Per-trace derived seeds keep defended traces independent of corpus order
// and of each other. `is_train` marks traces skipped in TestOnly mode.
inline DefenseOutcome defend_dataset(const std::vector<Trace>& traces, const DefenseConfig& cfg,
                                     DefendMode mode = DefendMode::TrainAndTest,
                                     const std::vector<bool>& is_train = {}) {
  DefenseOutcome out;
  out.traces.reserve(traces.size());
  double dm = 0.0, bo = 0.0, po = 0.0;
  long defended = 0;
  std::uint64_t master = cfg.kind == DefenseConfig::Kind::Inflation ? cfg.inflation.seed
                                                                    : cfg.injection.seed;
  for (size_t i = 0; i < traces.size(); ++i) {
    bool train_trace = i < is_train.size() && is_train[i];
    if (mode == DefendMode::TestOnly && train_trace) {
      out.traces.push_back(traces[i]);
      continue;
    }
    std::uint64_t seed = mix_seed(master, detail::trace_content_key(traces[i]));
    std::pair<Trace, OverheadReport> r =
        cfg.kind == DefenseConfig::Kind::Inflation
            ? apply_inflation(traces[i], [&] {
                InflationConfig c = cfg.inflation;
                c.seed = seed;
                return c;
              }())
            : apply_injection(traces[i], [&] {
                InjectionConfig c = cfg.injection;
                c.seed = seed;
                return c;
              }());
    dm += r.second.delay_multiplier;
    bo += r.second.byte_overhead;
    po += r.second.packet_overhead;
    ++defended;
    out.traces.push_back(std::move(r.first));
  }
  if (defended > 0) {
    out.mean_overhead.delay_multiplier = dm / static_cast<double>(defended);
    out.mean_overhead.byte_overhead = bo / static_cast<double>(defended);
    out.mean_overhead.packet_overhead = po / static_cast<double>(defended);
  }
  return out;
}

}  // namespace wflab
