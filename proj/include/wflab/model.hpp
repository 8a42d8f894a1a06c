#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "wflab/error.hpp"
#include "wflab/network.hpp"
#include "wflab/optimizer.hpp"
#include "wflab/rng.hpp"
#include "wflab/traffic.hpp"

namespace wflab {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  OptimizerConfig optimizer;
  std::uint64_t seed = 1;
  int patience = 0;  // early-stop patience on validation accuracy; 0 = off
  ChannelMask mask = ChannelMask::Both;

  void validate() const {
    if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
    if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2 (train-mode BN)");
  }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  double domain_accuracy = -1.0;  // -1 when not applicable
  double lambda = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  double best_val_accuracy = 0.0;
  int best_epoch = -1;
};

// A trained (or to-be-trained) model: network, input normalization,
// class-index <-> site-label table and a provenance manifest.
struct TrainedModel {
  ArchitectureConfig arch;
  std::shared_ptr<Network<float>> net;
  NormStats norm;
  std::vector<int> label_table;  // class index -> site label
  ChannelMask mask = ChannelMask::Both;
  std::string manifest;
  std::uint64_t init_seed = 0;

  int class_of_site(int site_label) const {
    for (size_t i = 0; i < label_table.size(); ++i)
      if (label_table[i] == site_label) return static_cast<int>(i);
    return -1;
  }
};

inline TrainedModel build_model(const ArchitectureConfig& cfg, std::uint64_t seed) {
  TrainedModel m;
  m.arch = cfg;
  m.net = std::make_shared<Network<float>>(cfg);
  m.net->init_params(seed);
  m.init_seed = seed;
  return m;
}

namespace detail {

// Deinterleave (jitter, size) pairs into a [B, 2, L] tensor.
inline Tensor<float> batch_tensor(const std::vector<const SampleVector*>& batch) {
  int b = static_cast<int>(batch.size());
  int len = batch.empty() ? 0 : batch.front()->window_len();
  Tensor<float> x({b, 2, len});
  for (int i = 0; i < b; ++i) {
    const auto& vals = batch[static_cast<size_t>(i)]->values;
    for (int t = 0; t < len; ++t) {
      x.at3(i, 0, t) = vals[2 * static_cast<size_t>(t)];
      x.at3(i, 1, t) = vals[2 * static_cast<size_t>(t) + 1];
    }
  }
  return x;
}

inline std::vector<int> build_label_table(const std::vector<SampleVector>& samples,
                                          int class_count) {
  std::set<int> labels;
  for (const auto& s : samples) labels.insert(s.site_label);
  if (static_cast<int>(labels.size()) > class_count)
    throw DataError("train: dataset has " + std::to_string(labels.size()) +
                    " site labels but the model has " + std::to_string(class_count) + " classes");
  return {labels.begin(), labels.end()};
}

inline std::vector<float> snapshot_params(Network<float>& net) {
  std::vector<float> out;
  for (auto* p : net.params()) out.insert(out.end(), p->value.begin(), p->value.end());
  return out;
}

inline void restore_params(Network<float>& net, const std::vector<float>& snap) {
  size_t off = 0;
  for (auto* p : net.params()) {
    std::copy(snap.begin() + static_cast<long>(off),
              snap.begin() + static_cast<long>(off + p->value.size()), p->value.begin());
    off += p->value.size();
  }
}

inline std::uint64_t data_fingerprint(const std::vector<SampleVector>& samples) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& s : samples) {
    h = mix_seed(h, static_cast<std::uint64_t>(s.site_label),
                 static_cast<std::uint64_t>(s.env_id));
    for (float v : s.values) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      h = h * 0x100000001b3ULL ^ bits;
    }
  }
  return h;
}

}  // namespace detail

struct Prediction {
  std::vector<int> site_labels;     // mapped through the label table
  std::vector<int> class_indices;   // argmax, ties toward lower index
  std::vector<std::vector<float>> probabilities;
};

inline Prediction predict(const TrainedModel& model, const std::vector<SampleVector>& samples,
                          int batch_size = 64) {
  Prediction out;
  if (samples.empty()) return out;
  for (size_t start = 0; start < samples.size(); start += static_cast<size_t>(batch_size)) {
    size_t end = std::min(samples.size(), start + static_cast<size_t>(batch_size));
    std::vector<SampleVector> prepped;
    std::vector<const SampleVector*> ptrs;
    prepped.reserve(end - start);
    for (size_t i = start; i < end; ++i)
      prepped.push_back(apply_norm(apply_channel_mask(samples[i], model.mask), model.norm));
    for (const auto& s : prepped) ptrs.push_back(&s);
    Tensor<float> logits = model.net->forward(detail::batch_tensor(ptrs), false);
    int classes = logits.dim(1);
    for (int b = 0; b < logits.dim(0); ++b) {
      int best = 0;
      for (int c = 1; c < classes; ++c)
        if (logits.at2(b, c) > logits.at2(b, best)) best = c;
      out.class_indices.push_back(best);
      out.site_labels.push_back(best < static_cast<int>(model.label_table.size())
                                    ? model.label_table[static_cast<size_t>(best)]
                                    : best);
      // stable softmax for reported probabilities
      float mx = logits.at2(b, 0);
      for (int c = 1; c < classes; ++c) mx = std::max(mx, logits.at2(b, c));
      double denom = 0.0;
      for (int c = 0; c < classes; ++c) denom += std::exp(static_cast<double>(logits.at2(b, c) - mx));
      std::vector<float> p(static_cast<size_t>(classes));
      for (int c = 0; c < classes; ++c)
        p[static_cast<size_t>(c)] =
            static_cast<float>(std::exp(static_cast<double>(logits.at2(b, c) - mx)) / denom);
      out.probabilities.push_back(std::move(p));
    }
  }
  return out;
}

inline double accuracy_on(const TrainedModel& model, const std::vector<SampleVector>& samples) {
  if (samples.empty()) return 0.0;
  Prediction p = predict(model, samples);
  long correct = 0;
  for (size_t i = 0; i < samples.size(); ++i)
    if (p.site_labels[i] == samples[i].site_label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

namespace detail {

// Shared supervised epoch driver; frozen names are skipped by the
// optimizer, and BN stats of frozen layers stay fixed (configured by the
// caller through freeze_bn_stats).
struct TrainLoopState {
  Optimizer<float> opt;
  Rng shuffle_rng;
  std::vector<float> best_snapshot;
  double best_val = -1.0;
  int best_epoch = -1;
  int since_best = 0;

  TrainLoopState(const OptimizerConfig& cfg, std::uint64_t seed)
      : opt(cfg), shuffle_rng(mix_seed(seed, 0x7EA1)) {}
};

inline void shuffle_indices(std::vector<size_t>& idx, Rng& rng) {
  for (size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
}

}  // namespace detail

// Supervised training: shuffled mini-batches, per-epoch validation
// accuracy, best-validation checkpoint restored at the end. Deterministic
// for a fixed seed. `frozen` names are excluded from updates.
inline TrainResult train(TrainedModel& model, const std::vector<SampleVector>& train_set,
                         const std::vector<SampleVector>& val_set, const TrainConfig& cfg,
                         const std::set<std::string>& frozen = {}, bool refit_norm = true) {
  cfg.validate();
  if (train_set.empty()) throw DataError("train: empty training set");
  TrainResult result;
  if (model.label_table.empty())
    model.label_table = detail::build_label_table(train_set, model.arch.class_count);
  for (const auto& s : train_set)
    if (model.class_of_site(s.site_label) < 0)
      throw DataError("train: site label " + std::to_string(s.site_label) +
                      " missing from label table");
  model.mask = cfg.mask;
  // normalization fitted on the (masked) training split only
  std::vector<SampleVector> prepped;
  prepped.reserve(train_set.size());
  for (const auto& s : train_set) prepped.push_back(apply_channel_mask(s, cfg.mask));
  if (refit_norm) model.norm = fit_norm_stats(prepped);
  for (auto& s : prepped) s = apply_norm(std::move(s), model.norm);

  {
    std::ostringstream m;
    m << "seed = " << cfg.seed << "\n";
    m << "epochs = " << cfg.epochs << "\n";
    m << "batch_size = " << cfg.batch_size << "\n";
    m << "mask = " << to_string(cfg.mask) << "\n";
    m << "train_fingerprint = " << detail::data_fingerprint(train_set) << "\n";
    model.manifest = m.str();
  }
  if (cfg.epochs == 0) return result;

  detail::TrainLoopState st(cfg.optimizer, cfg.seed);
  std::vector<size_t> idx(prepped.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    detail::shuffle_indices(idx, st.shuffle_rng);
    double loss_sum = 0.0;
    long batches = 0;
    for (size_t start = 0; start + 2 <= idx.size(); start += static_cast<size_t>(cfg.batch_size)) {
      size_t end = std::min(idx.size(), start + static_cast<size_t>(cfg.batch_size));
      if (end - start < 2) break;
      std::vector<const SampleVector*> batch;
      std::vector<int> labels;
      for (size_t i = start; i < end; ++i) {
        batch.push_back(&prepped[idx[i]]);
        labels.push_back(model.class_of_site(prepped[idx[i]].site_label));
      }
      model.net->zero_grad();
      Tensor<float> logits = model.net->forward(detail::batch_tensor(batch), true);
      auto ce = softmax_cross_entropy(logits, labels);
      if (!std::isfinite(ce.loss)) throw NumericError("train: non-finite loss");
      model.net->backward_features(model.net->backward_site(ce.grad_logits));
      st.opt.step(model.net->params(), frozen);
      loss_sum += ce.loss;
      ++batches;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    rec.val_accuracy = accuracy_on(model, val_set);
    result.history.push_back(rec);
    if (rec.val_accuracy > st.best_val) {
      st.best_val = rec.val_accuracy;
      st.best_epoch = epoch;
      st.best_snapshot = detail::snapshot_params(*model.net);
      st.since_best = 0;
    } else if (++st.since_best >= cfg.patience && cfg.patience > 0) {
      break;
    }
  }
  if (!st.best_snapshot.empty()) {
    detail::restore_params(*model.net, st.best_snapshot);
    result.best_val_accuracy = st.best_val;
    result.best_epoch = st.best_epoch;
  }
  return result;
}

struct FreezeMask {
  std::set<std::string> names;

  static FreezeMask conv_stack(TrainedModel& model) {
    FreezeMask mask;
    for (const auto& n : model.net->feature_param_names()) mask.names.insert(n);
    return mask;
  }
  static FreezeMask all(TrainedModel& model) {
    FreezeMask mask;
    for (auto* p : model.net->params()) mask.names.insert(p->name);
    return mask;
  }
};

// Freeze-and-finetune transfer: masked parameters (and the running stats
// of fully-frozen BN layers) are bit-identical before and after.
inline TrainResult finetune(TrainedModel& model, const std::vector<SampleVector>& train_set,
                            const std::vector<SampleVector>& val_set, const FreezeMask& mask,
                            const TrainConfig& cfg, bool reinit_head = false) {
  std::set<std::string> known;
  for (auto* p : model.net->params()) known.insert(p->name);
  for (const auto& n : mask.names)
    if (!known.count(n)) throw ConfigError("finetune: unknown parameter in freeze mask: " + n);
  std::vector<std::string> frozen_list(mask.names.begin(), mask.names.end());
  model.net->freeze_bn_stats(frozen_list);
  if (reinit_head) {
    model.label_table.clear();
    Rng rng(mix_seed(cfg.seed, 0xF1EA));
    for (auto* p : model.net->params()) {
      if (p->name.rfind("fc", 0) == 0 && !mask.names.count(p->name)) {
        if (p->name.size() > 2 && p->name.compare(p->name.size() - 2, 2, ".w") == 0) {
          double limit = std::sqrt(6.0 / static_cast<double>(p->shape.back()));
          for (auto& v : p->value) v = static_cast<float>(rng.uniform(-limit, limit));
        } else {
          std::fill(p->value.begin(), p->value.end(), 0.0f);
        }
      }
    }
  }
  // keep the pretrained normalization so frozen features see the same
  // input distribution they were trained on
  return train(model, train_set, val_set, cfg, mask.names, /*refit_norm=*/false);
}

}  // namespace wflab
