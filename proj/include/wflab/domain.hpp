#pragma once

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "wflab/error.hpp"
#include "wflab/model.hpp"

namespace wflab {

enum class DomainMode { Binary, MultiIndex };

struct LambdaSchedule {
  bool ramp = true;      // false: constant at `end`
  double start = 0.0;
  double end = 1.0;
  int ramp_epochs = 0;   // 0: first third of training

  double value(int epoch, int total_epochs) const {
    if (!ramp) return end;
    int span = ramp_epochs > 0 ? ramp_epochs : std::max(1, total_epochs / 3);
    if (ramp_epochs > 0 && ramp_epochs > total_epochs)
      throw ConfigError("lambda schedule: ramp longer than training");
    double f = std::min(1.0, static_cast<double>(epoch) / static_cast<double>(span));
    return start + (end - start) * f;
  }
};

struct DAConfig {
  double lambda_d = 1.0;  // trade-off between website loss and reversed domain loss
  DomainMode mode = DomainMode::Binary;
  int domain_count = 2;
  LambdaSchedule schedule;

  void validate() const {
    if (lambda_d < 0.0) throw ConfigError("da: lambda_d must be >= 0");
    if (domain_count < 2) throw ConfigError("da: domain_count must be >= 2");
  }
};

// Accuracy of the domain head on samples with known domain ids.
inline double domain_accuracy(const TrainedModel& model, const std::vector<SampleVector>& samples,
                              const std::vector<int>& domain_ids, int batch_size = 64) {
  if (samples.empty()) throw DataError("domain_accuracy: empty batch");
  if (samples.size() != domain_ids.size())
    throw DataError("domain_accuracy: id count mismatch");
  long correct = 0;
  for (size_t start = 0; start < samples.size(); start += static_cast<size_t>(batch_size)) {
    size_t end = std::min(samples.size(), start + static_cast<size_t>(batch_size));
    std::vector<SampleVector> prepped;
    std::vector<const SampleVector*> ptrs;
    for (size_t i = start; i < end; ++i)
      prepped.push_back(apply_norm(apply_channel_mask(samples[i], model.mask), model.norm));
    for (const auto& s : prepped) ptrs.push_back(&s);
    Tensor<float> enc = model.net->forward_features(detail::batch_tensor(ptrs), false);
    Tensor<float> logits = model.net->forward_domain(enc, false);
    for (int b = 0; b < logits.dim(0); ++b) {
      int best = 0;
      for (int c = 1; c < logits.dim(1); ++c)
        if (logits.at2(b, c) > logits.at2(b, best)) best = c;
      if (best == domain_ids[start + static_cast<size_t>(b)]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

namespace detail {

// One adversarial step, two passes sharing accumulated gradients:
//   pass A: labeled batch -> site CE, train-mode BN (updates running stats)
//   pass B: mixed batch -> domain CE through the GRL, BN pinned to the
//           current running stats so pass A's trajectory is untouched.
// With lambda = 0 the extractor and site head follow exactly the same
// trajectory as plain supervised training on the labeled stream.
inline double da_step(TrainedModel& model, Optimizer<float>& opt,
                      const std::vector<const SampleVector*>& labeled_batch,
                      const std::vector<int>& class_labels,
                      const std::vector<const SampleVector*>& domain_batch,
                      const std::vector<int>& domain_labels, double lambda) {
  model.net->zero_grad();
  Tensor<float> logits = model.net->forward(detail::batch_tensor(labeled_batch), true);
  auto ce = softmax_cross_entropy(logits, class_labels);
  if (!std::isfinite(ce.loss)) throw NumericError("da_train: non-finite website loss");
  model.net->backward_features(model.net->backward_site(ce.grad_logits));

  model.net->set_grl_lambda(lambda);
  model.net->set_all_bn_stats_frozen(true);
  Tensor<float> enc = model.net->forward_features(detail::batch_tensor(domain_batch), true);
  Tensor<float> dlogits = model.net->forward_domain(enc, true);
  auto dce = softmax_cross_entropy(dlogits, domain_labels);
  if (!std::isfinite(dce.loss)) throw NumericError("da_train: non-finite domain loss");
  model.net->backward_features(model.net->backward_domain(dce.grad_logits));
  model.net->set_all_bn_stats_frozen(false);

  opt.step(model.net->params());
  return ce.loss;
}

}  // namespace detail

// Domain-adversarial training: website CE on labeled source data plus a
// gradient-reversed domain CE on source+target. Target samples contribute
// no website labels anywhere.
inline TrainResult da_train(TrainedModel& model, const std::vector<SampleVector>& source_train,
                            const std::vector<SampleVector>& source_val,
                            const std::vector<SampleVector>& target_unlabeled,
                            const TrainConfig& cfg, const DAConfig& da) {
  cfg.validate();
  da.validate();
  if (model.arch.domain_count < 2)
    throw ConfigError("da_train: model was built without a domain head");
  if (source_train.empty() || target_unlabeled.empty())
    throw DataError("da_train: source and target must be non-empty");

  TrainResult result;
  if (model.label_table.empty())
    model.label_table = detail::build_label_table(source_train, model.arch.class_count);
  model.mask = cfg.mask;
  std::vector<SampleVector> src;
  src.reserve(source_train.size());
  for (const auto& s : source_train) src.push_back(apply_channel_mask(s, cfg.mask));
  model.norm = fit_norm_stats(src);
  for (auto& s : src) s = apply_norm(std::move(s), model.norm);
  std::vector<SampleVector> tgt;
  tgt.reserve(target_unlabeled.size());
  for (const auto& s : target_unlabeled)
    tgt.push_back(apply_norm(apply_channel_mask(s, cfg.mask), model.norm));

  detail::TrainLoopState st(cfg.optimizer, cfg.seed);
  Rng target_rng(mix_seed(cfg.seed, 0xD0A1));
  std::vector<size_t> src_idx(src.size()), tgt_idx(tgt.size());
  for (size_t i = 0; i < src_idx.size(); ++i) src_idx[i] = i;
  for (size_t i = 0; i < tgt_idx.size(); ++i) tgt_idx[i] = i;
  size_t tgt_cursor = tgt.size();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lambda = da.lambda_d * da.schedule.value(epoch, cfg.epochs);
    detail::shuffle_indices(src_idx, st.shuffle_rng);
    double loss_sum = 0.0;
    long batches = 0;
    for (size_t start = 0; start + 2 <= src_idx.size();
         start += static_cast<size_t>(cfg.batch_size)) {
      size_t end = std::min(src_idx.size(), start + static_cast<size_t>(cfg.batch_size));
      if (end - start < 2) break;
      std::vector<const SampleVector*> labeled, mixed;
      std::vector<int> labels, domains;
      for (size_t i = start; i < end; ++i) {
        labeled.push_back(&src[src_idx[i]]);
        labels.push_back(model.class_of_site(src[src_idx[i]].site_label));
        mixed.push_back(&src[src_idx[i]]);
        domains.push_back(0);
      }
      // balanced half: as many target samples as source samples
      for (size_t i = start; i < end; ++i) {
        if (tgt_cursor >= tgt_idx.size()) {
          detail::shuffle_indices(tgt_idx, target_rng);
          tgt_cursor = 0;
        }
        mixed.push_back(&tgt[tgt_idx[tgt_cursor++]]);
        domains.push_back(1);
      }
      loss_sum += detail::da_step(model, st.opt, labeled, labels, mixed, domains, lambda);
      ++batches;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lambda = lambda;
    rec.train_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    rec.val_accuracy = accuracy_on(model, source_val);
    {
      // diagnostic: domain accuracy on a balanced probe
      size_t n = std::min<size_t>(256, std::min(src.size(), tgt.size()));
      std::vector<SampleVector> probe;
      std::vector<int> ids;
      for (size_t i = 0; i < n; ++i) {
        probe.push_back(source_train[i]);
        ids.push_back(0);
      }
      for (size_t i = 0; i < n; ++i) {
        probe.push_back(target_unlabeled[i]);
        ids.push_back(1);
      }
      rec.domain_accuracy = domain_accuracy(model, probe, ids);
    }
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

// Multi-domain variant: every dataset is labeled; the domain head predicts
// the dataset index. Batches interleave the datasets evenly.
inline TrainResult multi_domain_train(TrainedModel& model,
                                      const std::vector<std::vector<SampleVector>>& domain_sets,
                                      const std::vector<SampleVector>& val_set,
                                      const TrainConfig& cfg, const DAConfig& da) {
  cfg.validate();
  da.validate();
  if (domain_sets.size() < 2)
    throw ConfigError("multi_domain_train: need at least 2 datasets");
  if (model.arch.domain_count != static_cast<int>(domain_sets.size()))
    throw ConfigError("multi_domain_train: domain head size does not match dataset count");
  for (const auto& d : domain_sets)
    if (d.empty()) throw DataError("multi_domain_train: empty domain dataset");

  TrainResult result;
  std::vector<SampleVector> pooled;
  for (const auto& d : domain_sets) pooled.insert(pooled.end(), d.begin(), d.end());
  if (model.label_table.empty())
    model.label_table = detail::build_label_table(pooled, model.arch.class_count);
  model.mask = cfg.mask;
  for (auto& s : pooled) s = apply_channel_mask(std::move(s), cfg.mask);
  model.norm = fit_norm_stats(pooled);

  // flat list with domain ids, normalized once
  struct Tagged {
    SampleVector sample;
    int domain;
  };
  std::vector<Tagged> data;
  for (size_t d = 0; d < domain_sets.size(); ++d)
    for (const auto& s : domain_sets[d])
      data.push_back({apply_norm(apply_channel_mask(s, cfg.mask), model.norm),
                      static_cast<int>(d)});

  detail::TrainLoopState st(cfg.optimizer, cfg.seed);
  std::vector<size_t> idx(data.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lambda = da.lambda_d * da.schedule.value(epoch, cfg.epochs);
    detail::shuffle_indices(idx, st.shuffle_rng);
    double loss_sum = 0.0;
    long batches = 0;
    for (size_t start = 0; start + 2 <= idx.size();
         start += static_cast<size_t>(cfg.batch_size)) {
      size_t end = std::min(idx.size(), start + static_cast<size_t>(cfg.batch_size));
      if (end - start < 2) break;
      std::vector<const SampleVector*> batch;
      std::vector<int> labels, domains;
      for (size_t i = start; i < end; ++i) {
        batch.push_back(&data[idx[i]].sample);
        labels.push_back(model.class_of_site(data[idx[i]].sample.site_label));
        domains.push_back(data[idx[i]].domain);
      }
      loss_sum += detail::da_step(model, st.opt, batch, labels, batch, domains, lambda);
      ++batches;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lambda = lambda;
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

}  // namespace wflab
