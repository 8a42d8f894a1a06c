#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "wflab/error.hpp"
#include "wflab/rng.hpp"

namespace wflab {

struct PacketRecord {
  double timestamp_us = 0.0;  // microseconds since trace start
  double size_bytes = 0.0;    // bytes on wire, >= 0

  friend bool operator==(const PacketRecord&, const PacketRecord&) = default;
};

struct Trace {
  std::vector<PacketRecord> packets;  // sorted by non-decreasing timestamp
  int site_label = 0;
  int env_id = 0;
  std::string epoch_tag;  // collection batch, e.g. "2022-12"
};

inline constexpr int kWindowLen = 500;

// 1000 values interleaved as (jitter_i, size_i), i = 1..window.
struct SampleVector {
  std::vector<float> values;
  int site_label = 0;
  int env_id = 0;

  int window_len() const { return static_cast<int>(values.size() / 2); }
  float jitter(int i) const { return values[2 * static_cast<size_t>(i)]; }
  float size(int i) const { return values[2 * static_cast<size_t>(i) + 1]; }
};

enum class ChannelMask { Both, JitterOnly, SizeOnly };

inline const char* to_string(ChannelMask m) {
  switch (m) {
    case ChannelMask::Both: return "both";
    case ChannelMask::JitterOnly: return "jitter-only";
    case ChannelMask::SizeOnly: return "size-only";
  }
  return "both";
}

inline ChannelMask channel_mask_from_string(const std::string& s) {
  if (s == "both") return ChannelMask::Both;
  if (s == "jitter-only" || s == "jitter") return ChannelMask::JitterOnly;
  if (s == "size-only" || s == "size") return ChannelMask::SizeOnly;
  throw ConfigError("unknown channel mask: " + s);
}

// Per-channel standardization stats, fitted on a training set only.
struct NormStats {
  double jitter_mean = 0.0, jitter_std = 0.0;
  double size_mean = 0.0, size_std = 0.0;
  double epsilon = 1e-6;
};

struct DatasetSplit {
  std::vector<SampleVector> train, validation, test;
};

inline std::vector<double> compute_jitter(const Trace& trace) {
  if (trace.packets.empty()) throw DataError("compute_jitter: empty trace");
  std::vector<double> jitter(trace.packets.size());
  jitter[0] = 0.0;
  for (size_t i = 1; i < trace.packets.size(); ++i) {
    double d = trace.packets[i].timestamp_us - trace.packets[i - 1].timestamp_us;
    if (d < 0.0) throw DataError("compute_jitter: timestamps not sorted");
    jitter[i] = d;
  }
  return jitter;
}

// Seamless windowing: offsets 0, stride, 2*stride, ... Jitter is computed
// over the whole trace first, so a window that starts mid-stream keeps its
// true delta from the previous packet; only the very first packet of the
// trace gets jitter 0.
inline std::vector<SampleVector> extract_windows(const Trace& trace, int window = kWindowLen,
                                                 int stride = 0) {
  if (stride <= 0) stride = window;
  if (window < 1) throw ConfigError("extract_windows: window must be >= 1");
  auto n = static_cast<long>(trace.packets.size());
  std::vector<SampleVector> out;
  if (n < window) return out;
  std::vector<double> jitter = compute_jitter(trace);
  long count = (n - window) / stride + 1;
  out.reserve(static_cast<size_t>(count));
  for (long w = 0; w < count; ++w) {
    long start = w * stride;
    SampleVector s;
    s.site_label = trace.site_label;
    s.env_id = trace.env_id;
    s.values.resize(static_cast<size_t>(window) * 2);
    for (long i = 0; i < window; ++i) {
      s.values[2 * static_cast<size_t>(i)] = static_cast<float>(jitter[static_cast<size_t>(start + i)]);
      s.values[2 * static_cast<size_t>(i) + 1] =
          static_cast<float>(trace.packets[static_cast<size_t>(start + i)].size_bytes);
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline SampleVector apply_channel_mask(SampleVector sample, ChannelMask mask) {
  if (mask == ChannelMask::Both) return sample;
  size_t offset = (mask == ChannelMask::JitterOnly) ? 1 : 0;  // entry to zero
  for (size_t i = offset; i < sample.values.size(); i += 2) sample.values[i] = 0.0f;
  return sample;
}

inline NormStats fit_norm_stats(const std::vector<SampleVector>& train, double epsilon = 1e-6) {
  if (train.empty()) throw DataError("fit_norm_stats: empty training set");
  if (epsilon <= 0.0) throw ConfigError("fit_norm_stats: epsilon must be > 0");
  double sum_j = 0.0, sum_s = 0.0;
  std::uint64_t n = 0;
  for (const auto& s : train) {
    for (size_t i = 0; i + 1 < s.values.size(); i += 2) {
      sum_j += s.values[i];
      sum_s += s.values[i + 1];
      ++n;
    }
  }
  NormStats stats;
  stats.epsilon = epsilon;
  stats.jitter_mean = sum_j / static_cast<double>(n);
  stats.size_mean = sum_s / static_cast<double>(n);
  double var_j = 0.0, var_s = 0.0;
  for (const auto& s : train) {
    for (size_t i = 0; i + 1 < s.values.size(); i += 2) {
      double dj = s.values[i] - stats.jitter_mean;
      double ds = s.values[i + 1] - stats.size_mean;
      var_j += dj * dj;
      var_s += ds * ds;
    }
  }
  stats.jitter_std = std::sqrt(var_j / static_cast<double>(n));
  stats.size_std = std::sqrt(var_s / static_cast<double>(n));
  return stats;
}

inline SampleVector apply_norm(SampleVector sample, const NormStats& stats) {
  double denom_j = std::max(stats.jitter_std, stats.epsilon);
  double denom_s = std::max(stats.size_std, stats.epsilon);
  for (size_t i = 0; i + 1 < sample.values.size(); i += 2) {
    sample.values[i] = static_cast<float>((sample.values[i] - stats.jitter_mean) / denom_j);
    sample.values[i + 1] = static_cast<float>((sample.values[i + 1] - stats.size_mean) / denom_s);
  }
  return sample;
}

// Stratified deterministic split. Per class: shuffled, then floor(ratio*n)
// to validation and test, remainder to train.
inline DatasetSplit split_dataset(const std::vector<SampleVector>& samples,
                                  double train_ratio = 0.5, double val_ratio = 0.25,
                                  double test_ratio = 0.25, std::uint64_t seed = 0) {
  if (samples.empty()) throw DataError("split_dataset: no samples");
  if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9)
    throw ConfigError("split_dataset: ratios must sum to 1");
  int max_label = 0;
  for (const auto& s : samples) max_label = std::max(max_label, s.site_label);
  std::vector<std::vector<size_t>> by_class(static_cast<size_t>(max_label) + 1);
  for (size_t i = 0; i < samples.size(); ++i)
    by_class[static_cast<size_t>(samples[i].site_label)].push_back(i);

  DatasetSplit split;
  for (size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    if (idx.empty()) continue;
    Rng rng(mix_seed(seed, 0x5B17, c));
    for (size_t i = idx.size(); i > 1; --i)
      std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
    size_t n = idx.size();
    size_t n_val = static_cast<size_t>(std::floor(val_ratio * static_cast<double>(n)));
    size_t n_test = static_cast<size_t>(std::floor(test_ratio * static_cast<double>(n)));
    size_t n_train = n - n_val - n_test;
    for (size_t i = 0; i < n; ++i) {
      const auto& s = samples[idx[i]];
      if (i < n_train)
        split.train.push_back(s);
      else if (i < n_train + n_val)
        split.validation.push_back(s);
      else
        split.test.push_back(s);
    }
  }
  return split;
}

// CSV rows: timestamp_us,size_bytes. Optional header, blank lines skipped.
// Sub-microsecond timestamps are rounded on ingestion.
inline Trace ingest_csv(std::istream& in, int site_label, int env_id,
                        const std::string& epoch_tag = "") {
  Trace trace;
  trace.site_label = site_label;
  trace.env_id = env_id;
  trace.epoch_tag = epoch_tag;
  std::string line;
  long file_line = 0;  // 1-indexed physical lines, used in error messages
  bool first_content_line = true;
  while (std::getline(in, line)) {
    ++file_line;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first_content_line) {
      first_content_line = false;
      // header detection: first field not numeric
      if (!line.empty() && !std::isdigit(static_cast<unsigned char>(line[0])) &&
          line[0] != '-' && line[0] != '+' && line[0] != '.')
        continue;
    }
    auto comma = line.find(',');
    if (comma == std::string::npos)
      throw DataError("ingest_csv: missing comma at line " + std::to_string(file_line));
    double ts, size;
    try {
      size_t pos = 0;
      ts = std::stod(line.substr(0, comma), &pos);
      if (pos != comma) throw std::invalid_argument("trailing");
      std::string rest = line.substr(comma + 1);
      size = std::stod(rest, &pos);
      if (pos != rest.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw DataError("ingest_csv: parse error at line " + std::to_string(file_line));
    }
    if (size < 0.0) throw DataError("ingest_csv: negative size at line " + std::to_string(file_line));
    if (!trace.packets.empty() && ts < trace.packets.back().timestamp_us)
      throw DataError("ingest_csv: decreasing timestamp at line " + std::to_string(file_line));
    trace.packets.push_back({std::round(ts), std::floor(size)});
  }
  return trace;
}

inline Trace ingest_csv_file(const std::string& path, int site_label, int env_id,
                             const std::string& epoch_tag = "") {
  std::ifstream in(path);
  if (!in) throw DataError("ingest_csv: cannot open " + path);
  return ingest_csv(in, site_label, env_id, epoch_tag);
}

}  // namespace wflab
