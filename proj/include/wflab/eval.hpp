#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "wflab/defenses.hpp"
#include "wflab/error.hpp"
#include "wflab/model.hpp"
#include "wflab/traffic.hpp"

namespace wflab {

struct EvalReport {
  double accuracy = 0.0;
  std::vector<double> precision, recall, f1;     // per class
  std::vector<std::vector<long>> confusion;      // [truth][predicted]
  long total = 0;
};

// predicted/truth are class indices in [0, class_count). 0/0 ratios are 0.
inline EvalReport compute_metrics(const std::vector<int>& predicted,
                                  const std::vector<int>& truth, int class_count) {
  if (predicted.size() != truth.size()) throw DataError("compute_metrics: length mismatch");
  EvalReport r;
  r.confusion.assign(static_cast<size_t>(class_count),
                     std::vector<long>(static_cast<size_t>(class_count), 0));
  long correct = 0;
  for (size_t i = 0; i < truth.size(); ++i) {
    int t = truth[i], p = predicted[i];
    if (t < 0 || t >= class_count || p < 0 || p >= class_count)
      throw DataError("compute_metrics: label out of range");
    ++r.confusion[static_cast<size_t>(t)][static_cast<size_t>(p)];
    if (t == p) ++correct;
  }
  r.total = static_cast<long>(truth.size());
  r.accuracy = r.total ? static_cast<double>(correct) / static_cast<double>(r.total) : 0.0;
  r.precision.resize(static_cast<size_t>(class_count), 0.0);
  r.recall.resize(static_cast<size_t>(class_count), 0.0);
  r.f1.resize(static_cast<size_t>(class_count), 0.0);
  for (int c = 0; c < class_count; ++c) {
    long tp = r.confusion[static_cast<size_t>(c)][static_cast<size_t>(c)];
    long pred_c = 0, truth_c = 0;
    for (int o = 0; o < class_count; ++o) {
      pred_c += r.confusion[static_cast<size_t>(o)][static_cast<size_t>(c)];
      truth_c += r.confusion[static_cast<size_t>(c)][static_cast<size_t>(o)];
    }
    double prec = pred_c ? static_cast<double>(tp) / static_cast<double>(pred_c) : 0.0;
    double rec = truth_c ? static_cast<double>(tp) / static_cast<double>(truth_c) : 0.0;
    r.precision[static_cast<size_t>(c)] = prec;
    r.recall[static_cast<size_t>(c)] = rec;
    r.f1[static_cast<size_t>(c)] = (prec + rec) > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
  }
  return r;
}

inline EvalReport evaluate(const TrainedModel& model, const std::vector<SampleVector>& test) {
  Prediction pred = predict(model, test);
  std::vector<int> truth, predicted;
  truth.reserve(test.size());
  for (size_t i = 0; i < test.size(); ++i) {
    int t = model.class_of_site(test[i].site_label);
    if (t < 0) throw DataError("evaluate: test label not in the model's label table");
    truth.push_back(t);
    predicted.push_back(pred.class_indices[i]);
  }
  return compute_metrics(predicted, truth, model.arch.class_count);
}

struct CrossDomainMatrix {
  std::vector<int> env_ids;
  std::vector<std::vector<double>> accuracy;  // [train env][test env]
};

namespace detail {

inline std::map<int, std::vector<SampleVector>> group_by_env(
    const std::vector<SampleVector>& samples) {
  std::map<int, std::vector<SampleVector>> out;
  for (const auto& s : samples) out[s.env_id].push_back(s);
  return out;
}

inline int count_sites(const std::vector<SampleVector>& samples) {
  std::set<int> sites;
  for (const auto& s : samples) sites.insert(s.site_label);
  return static_cast<int>(sites.size());
}

}  // namespace detail

// Train on each environment's train split, evaluate on every environment's
// test split. Every cell retrains from scratch with a derived seed.
inline CrossDomainMatrix cross_domain_run(const std::vector<SampleVector>& samples, Preset preset,
                                          const TrainConfig& cfg) {
  auto by_env = detail::group_by_env(samples);
  CrossDomainMatrix m;
  std::map<int, DatasetSplit> splits;
  for (auto& [env, env_samples] : by_env) {
    m.env_ids.push_back(env);
    splits[env] = split_dataset(env_samples, 0.5, 0.25, 0.25, mix_seed(cfg.seed, 0x59, env));
  }
  int classes = detail::count_sites(samples);
  for (int train_env : m.env_ids) {
    ArchitectureConfig arch = ArchitectureConfig::make(preset, classes);
    TrainConfig cell_cfg = cfg;
    cell_cfg.seed = mix_seed(cfg.seed, 0xCE11, train_env);
    TrainedModel model = build_model(arch, cell_cfg.seed);
    train(model, splits[train_env].train, splits[train_env].validation, cell_cfg);
    std::vector<double> row;
    for (int test_env : m.env_ids) row.push_back(evaluate(model, splits[test_env].test).accuracy);
    m.accuracy.push_back(std::move(row));
  }
  return m;
}

struct LearningCurvePoint {
  int samples_per_class = 0;
  double accuracy = 0.0;
};

enum class CurveMode { Scratch, PretrainFinetune };

// Learning curve on a target environment. Scratch trains on stratified
// subsets of the target env; PretrainFinetune first trains on all other
// environments, then fine-tunes the FC head (conv stack frozen) on the
// subset.
inline std::vector<LearningCurvePoint> learning_curve_run(
    const std::vector<SampleVector>& samples, const std::vector<int>& sizes, CurveMode mode,
    int target_env, Preset preset, const TrainConfig& cfg) {
  auto by_env = detail::group_by_env(samples);
  if (!by_env.count(target_env)) throw ConfigError("learning_curve_run: unknown target env");
  int classes = detail::count_sites(samples);
  DatasetSplit target_split = split_dataset(by_env[target_env], 0.5, 0.25, 0.25,
                                            mix_seed(cfg.seed, 0x1C, target_env));
  // per-class pools from the target train split
  std::map<int, std::vector<const SampleVector*>> pools;
  for (const auto& s : target_split.train) pools[s.site_label].push_back(&s);
  std::vector<SampleVector> other;
  for (auto& [env, env_samples] : by_env)
    if (env != target_env) other.insert(other.end(), env_samples.begin(), env_samples.end());

  std::vector<LearningCurvePoint> curve;
  int prev = 0;
  for (int size : sizes) {
    if (size <= prev) throw ConfigError("learning_curve_run: sizes must be strictly increasing");
    prev = size;
    std::vector<SampleVector> subset;
    for (auto& [site, pool] : pools) {
      if (static_cast<int>(pool.size()) < size)
        throw DataError("learning_curve_run: not enough samples for site " +
                        std::to_string(site));
      for (int i = 0; i < size; ++i) subset.push_back(*pool[static_cast<size_t>(i)]);
    }
    TrainConfig cell_cfg = cfg;
    cell_cfg.seed = mix_seed(cfg.seed, 0x1CA, static_cast<std::uint64_t>(size),
                             mode == CurveMode::Scratch ? 0u : 1u);
    TrainedModel model = build_model(ArchitectureConfig::make(preset, classes), cell_cfg.seed);
    if (mode == CurveMode::PretrainFinetune) {
      if (other.empty()) throw ConfigError("learning_curve_run: pretrain needs other envs");
      DatasetSplit pre = split_dataset(other, 0.8, 0.2, 0.0, mix_seed(cell_cfg.seed, 0xFE));
      train(model, pre.train, pre.validation, cell_cfg);
      finetune(model, subset, target_split.validation, FreezeMask::conv_stack(model), cell_cfg);
    } else {
      train(model, subset, target_split.validation, cell_cfg);
    }
    curve.push_back({size, evaluate(model, target_split.test).accuracy});
  }
  return curve;
}

// Accuracy as the number of websites grows; each count uses the first n
// site labels.
inline std::vector<std::pair<int, double>> website_scaling_run(
    const std::vector<SampleVector>& samples, const std::vector<int>& counts, Preset preset,
    const TrainConfig& cfg) {
  std::set<int> sites;
  for (const auto& s : samples) sites.insert(s.site_label);
  std::vector<int> ordered(sites.begin(), sites.end());
  std::vector<std::pair<int, double>> result;
  for (int n : counts) {
    if (n > static_cast<int>(ordered.size()))
      throw ConfigError("website_scaling_run: count exceeds available sites");
    std::set<int> keep(ordered.begin(), ordered.begin() + n);
    std::vector<SampleVector> subset;
    for (const auto& s : samples)
      if (keep.count(s.site_label)) subset.push_back(s);
    TrainConfig cell_cfg = cfg;
    cell_cfg.seed = mix_seed(cfg.seed, 0x5CA1E, static_cast<std::uint64_t>(n));
    DatasetSplit split = split_dataset(subset, 0.5, 0.25, 0.25, cell_cfg.seed);
    TrainedModel model = build_model(ArchitectureConfig::make(preset, n), cell_cfg.seed);
    train(model, split.train, split.validation, cell_cfg);
    result.push_back({n, evaluate(model, split.test).accuracy});
  }
  return result;
}

// Single-feature ablation: the mask is applied before normalization
// fitting inside train(); test inputs are masked by predict().
inline std::map<ChannelMask, EvalReport> ablation_run(const std::vector<SampleVector>& samples,
                                                      const std::vector<ChannelMask>& masks,
                                                      Preset preset, const TrainConfig& cfg) {
  std::map<ChannelMask, EvalReport> out;
  int classes = detail::count_sites(samples);
  for (ChannelMask mask : masks) {
    TrainConfig cell_cfg = cfg;
    cell_cfg.mask = mask;
    cell_cfg.seed = mix_seed(cfg.seed, 0xAB1A, static_cast<std::uint64_t>(mask));
    DatasetSplit split = split_dataset(samples, 0.5, 0.25, 0.25, cell_cfg.seed);
    TrainedModel model = build_model(ArchitectureConfig::make(preset, classes), cell_cfg.seed);
    train(model, split.train, split.validation, cell_cfg);
    out[mask] = evaluate(model, split.test);
  }
  return out;
}

struct DefenseCurvePoint {
  std::string setting;
  OverheadReport overhead;
  double accuracy = 0.0;
};

// Defend train+test, retrain from scratch, evaluate. Traces are windowed
// after the defense so injected packets land inside the feature vectors.
inline DefenseCurvePoint defense_point_run(const std::vector<Trace>& traces,
                                           const DefenseConfig& defense, Preset preset,
                                           const TrainConfig& cfg, int window = kWindowLen) {
  DefenseOutcome defended = defend_dataset(traces, defense);
  std::vector<SampleVector> windows;
  for (const auto& t : defended.traces) {
    auto w = extract_windows(t, window);
    windows.insert(windows.end(), w.begin(), w.end());
  }
  DatasetSplit split = split_dataset(windows, 0.5, 0.25, 0.25, mix_seed(cfg.seed, 0xDEF));
  TrainedModel model =
      build_model(ArchitectureConfig::make(preset, detail::count_sites(windows)), cfg.seed);
  train(model, split.train, split.validation, cfg);
  DefenseCurvePoint point;
  point.overhead = defended.mean_overhead;
  point.accuracy = evaluate(model, split.test).accuracy;
  return point;
}

// Injection with per-day trigger rotation: train/val traces are tagged as
// one collection day, test traces as another, so the trigger pool index a
// site maps to changes between training and testing. The split is by
// trace, not by window, to keep the two days disjoint.
inline DefenseCurvePoint injection_day_split_run(std::vector<Trace> traces,
                                                 const DefenseConfig& defense, Preset preset,
                                                 const TrainConfig& cfg,
                                                 double train_frac = 0.75,
                                                 int window = kWindowLen) {
  std::map<std::pair<int, int>, std::vector<size_t>> groups;
  for (size_t i = 0; i < traces.size(); ++i)
    groups[{traces[i].site_label, traces[i].env_id}].push_back(i);
  for (auto& [key, idx] : groups) {
    size_t n_train = static_cast<size_t>(
        std::ceil(train_frac * static_cast<double>(idx.size())));
    if (n_train == idx.size() && idx.size() > 1) --n_train;
    for (size_t j = 0; j < idx.size(); ++j)
      traces[idx[j]].epoch_tag = j < n_train ? "day-a" : "day-b";
  }
  DefenseOutcome defended = defend_dataset(traces, defense);
  std::vector<SampleVector> train_windows, test_windows;
  for (const auto& t : defended.traces) {
    auto w = extract_windows(t, window);
    auto& dst = t.epoch_tag == "day-a" ? train_windows : test_windows;
    dst.insert(dst.end(), w.begin(), w.end());
  }
  if (train_windows.empty() || test_windows.empty())
    throw DataError("injection_day_split_run: a day ended up empty");
  DatasetSplit split = split_dataset(train_windows, 0.8, 0.2, 0.0, mix_seed(cfg.seed, 0xDA4));
  TrainedModel model = build_model(
      ArchitectureConfig::make(preset, detail::count_sites(train_windows)), cfg.seed);
  train(model, split.train, split.validation, cfg);
  DefenseCurvePoint point;
  point.overhead = defended.mean_overhead;
  point.accuracy = evaluate(model, test_windows).accuracy;
  return point;
}

}  // namespace wflab
