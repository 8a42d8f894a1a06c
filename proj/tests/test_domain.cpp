#include <gtest/gtest.h>

#include <map>
#include <set>

#include "wflab/domain.hpp"
#include "wflab/model.hpp"
#include "wflab/rng.hpp"

using namespace wflab;

namespace {

// 2 sites x 2 envs; site signal in mean packet size, env signal in jitter
// scale, both far above the noise floor
std::vector<SampleVector> env_samples(int per_cell, int env, std::uint64_t seed,
                                      int sites = 2, int len = 500) {
  Rng rng(seed);
  std::vector<SampleVector> out;
  for (int c = 0; c < sites; ++c) {
    for (int i = 0; i < per_cell; ++i) {
      SampleVector s;
      s.site_label = c;
      s.env_id = env;
      double jit_scale = env == 0 ? 300.0 : 3000.0;
      for (int t = 0; t < len; ++t) {
        s.values.push_back(static_cast<float>(rng.uniform(0.5, 1.5) * jit_scale));
        s.values.push_back(static_cast<float>(200.0 + 900.0 * c + rng.uniform(-60, 60)));
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

TrainConfig fast_cfg(int epochs, std::uint64_t seed = 1) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 8;
  cfg.seed = seed;
  return cfg;
}

TrainedModel da_model(int classes = 2, int domains = 2, std::uint64_t seed = 1) {
  return build_model(ArchitectureConfig::make(Preset::Tiny, classes, domains), seed);
}

}  // namespace

TEST(LambdaSchedule, ConstantAndRamp) {
  LambdaSchedule constant{.ramp = false, .start = 0.0, .end = 0.7};
  EXPECT_DOUBLE_EQ(constant.value(0, 10), 0.7);
  EXPECT_DOUBLE_EQ(constant.value(9, 10), 0.7);

  LambdaSchedule ramp{.ramp = true, .start = 0.0, .end = 1.0, .ramp_epochs = 4};
  EXPECT_DOUBLE_EQ(ramp.value(0, 10), 0.0);
  EXPECT_DOUBLE_EQ(ramp.value(2, 10), 0.5);
  EXPECT_DOUBLE_EQ(ramp.value(4, 10), 1.0);
  EXPECT_DOUBLE_EQ(ramp.value(9, 10), 1.0);  // clamps after the ramp

  LambdaSchedule defaulted;  // span defaults to total/3
  EXPECT_DOUBLE_EQ(defaulted.value(3, 9), 1.0);
  EXPECT_DOUBLE_EQ(defaulted.value(1, 9), 1.0 / 3.0);
}

TEST(LambdaSchedule, RampLongerThanTrainingRejected) {
  LambdaSchedule bad{.ramp = true, .start = 0.0, .end = 1.0, .ramp_epochs = 20};
  EXPECT_THROW(bad.value(0, 10), ConfigError);
}

TEST(DAConfigTest, Validation) {
  DAConfig ok;
  EXPECT_NO_THROW(ok.validate());
  DAConfig neg;
  neg.lambda_d = -0.5;
  EXPECT_THROW(neg.validate(), ConfigError);
  DAConfig one;
  one.domain_count = 1;
  EXPECT_THROW(one.validate(), ConfigError);
}

TEST(DaTrain, RequiresDomainHeadAndData) {
  auto src = env_samples(4, 0, 1);
  auto tgt = env_samples(4, 1, 2);
  TrainedModel plain = build_model(ArchitectureConfig::make(Preset::Tiny, 2), 1);
  EXPECT_THROW(da_train(plain, src, src, tgt, fast_cfg(1), DAConfig{}), ConfigError);
  TrainedModel model = da_model();
  EXPECT_THROW(da_train(model, src, src, {}, fast_cfg(1), DAConfig{}), DataError);
  EXPECT_THROW(da_train(model, {}, src, tgt, fast_cfg(1), DAConfig{}), DataError);
}

TEST(DaTrain, LambdaZeroMatchesSupervisedBitwise) {
  auto src = env_samples(8, 0, 11);
  auto val = env_samples(4, 0, 12);
  auto tgt = env_samples(8, 1, 13);

  TrainedModel supervised = da_model(2, 2, 3);
  train(supervised, src, val, fast_cfg(3, 21));

  TrainedModel adapted = da_model(2, 2, 3);
  DAConfig da;
  da.lambda_d = 0.0;
  da_train(adapted, src, val, tgt, fast_cfg(3, 21), da);

  // extractor and site head follow the identical trajectory; only the
  // domain head (which sees gradients even at lambda = 0) may differ
  auto sup_params = supervised.net->params();
  auto ada_params = adapted.net->params();
  ASSERT_EQ(sup_params.size(), ada_params.size());
  for (size_t i = 0; i < sup_params.size(); ++i) {
    ASSERT_EQ(sup_params[i]->name, ada_params[i]->name);
    if (sup_params[i]->name.rfind("domain", 0) == 0) continue;
    EXPECT_EQ(sup_params[i]->value, ada_params[i]->value) << sup_params[i]->name;
  }
  EXPECT_GE(accuracy_on(adapted, val), 0.9);
}

TEST(DaTrain, TargetSiteLabelsNeverRead) {
  auto src = env_samples(8, 0, 31);
  auto val = env_samples(4, 0, 32);
  auto tgt = env_samples(8, 1, 33);
  auto scrambled = tgt;
  Rng rng(7);
  for (auto& s : scrambled) s.site_label = static_cast<int>(rng.uniform_index(1000));

  DAConfig da;
  da.lambda_d = 1.0;
  TrainedModel a = da_model(2, 2, 5);
  da_train(a, src, val, tgt, fast_cfg(2, 41), da);
  TrainedModel b = da_model(2, 2, 5);
  da_train(b, src, val, scrambled, fast_cfg(2, 41), da);
  EXPECT_EQ(detail::snapshot_params(*a.net), detail::snapshot_params(*b.net));
}

TEST(DaTrain, HistoryRecordsLambdaAndDomainAccuracy) {
  auto src = env_samples(6, 0, 51);
  auto tgt = env_samples(6, 1, 52);
  DAConfig da;
  da.lambda_d = 1.0;
  da.schedule = {.ramp = true, .start = 0.0, .end = 1.0, .ramp_epochs = 2};
  TrainedModel model = da_model();
  TrainResult r = da_train(model, src, src, tgt, fast_cfg(3), da);
  ASSERT_EQ(r.history.size(), 3u);
  EXPECT_DOUBLE_EQ(r.history[0].lambda, 0.0);
  EXPECT_DOUBLE_EQ(r.history[1].lambda, 0.5);
  EXPECT_DOUBLE_EQ(r.history[2].lambda, 1.0);
  for (const auto& rec : r.history) {
    EXPECT_GE(rec.domain_accuracy, 0.0);
    EXPECT_LE(rec.domain_accuracy, 1.0);
  }
}

TEST(DaTrain, AdversarialLambdaSuppressesDomainHead) {
  // with lambda = 0 the domain head separates the (strongly separable)
  // envs; with adversarial pressure the extractor removes that signal
  auto src = env_samples(16, 0, 61);
  auto tgt = env_samples(16, 1, 62);
  std::vector<SampleVector> probe;
  std::vector<int> ids;
  for (const auto& s : src) { probe.push_back(s); ids.push_back(0); }
  for (const auto& s : tgt) { probe.push_back(s); ids.push_back(1); }

  DAConfig free_head;
  free_head.lambda_d = 0.0;
  TrainedModel baseline = da_model(2, 2, 7);
  da_train(baseline, src, src, tgt, fast_cfg(8, 71), free_head);
  double acc_free = domain_accuracy(baseline, probe, ids);

  DAConfig adversarial;
  adversarial.lambda_d = 2.0;
  adversarial.schedule.ramp = false;
  TrainedModel adapted = da_model(2, 2, 7);
  TrainResult r = da_train(adapted, src, src, tgt, fast_cfg(8, 71), adversarial);
  double acc_adv = r.history.back().domain_accuracy;

  EXPECT_GE(acc_free, 0.9);
  EXPECT_LT(acc_adv, acc_free);
}

TEST(DomainAccuracy, InputValidation) {
  TrainedModel model = da_model();
  auto src = env_samples(2, 0, 1);
  EXPECT_THROW(domain_accuracy(model, {}, {}), DataError);
  EXPECT_THROW(domain_accuracy(model, src, {0}), DataError);
}

TEST(GrlWiring, FeatureGradientsScaleByMinusLambda) {
  TrainedModel model = da_model(2, 2, 9);
  auto data = env_samples(4, 0, 91);
  std::vector<const SampleVector*> ptrs;
  for (const auto& s : data) ptrs.push_back(&s);
  Tensor<float> x = detail::batch_tensor(ptrs);

  auto domain_pass = [&](double lambda) {
    model.net->zero_grad();
    model.net->set_grl_lambda(lambda);
    Tensor<float> enc = model.net->forward_features(x, true);
    Tensor<float> dlogits = model.net->forward_domain(enc, true);
    std::vector<int> domains(data.size(), 0);
    for (size_t i = 0; i < domains.size(); ++i) domains[i] = static_cast<int>(i % 2);
    auto dce = softmax_cross_entropy(dlogits, domains);
    model.net->backward_features(model.net->backward_domain(dce.grad_logits));
    std::map<std::string, std::vector<float>> grads;
    for (auto* p : model.net->params()) grads[p->name] = p->grad;
    return grads;
  };

  auto g0 = domain_pass(0.0);
  auto g1 = domain_pass(1.0);
  auto g2 = domain_pass(2.0);

  auto feature_names = model.net->feature_param_names();
  std::set<std::string> features(feature_names.begin(), feature_names.end());
  bool any_nonzero = false;
  for (const auto& [name, grad] : g1) {
    if (!features.count(name)) continue;
    for (size_t i = 0; i < grad.size(); ++i) {
      EXPECT_EQ(g0[name][i], 0.0f) << name;           // exact zeros at lambda = 0
      EXPECT_EQ(g2[name][i], 2.0f * grad[i]) << name; // exact power-of-two scaling
      if (grad[i] != 0.0f) any_nonzero = true;
    }
  }
  EXPECT_TRUE(any_nonzero);
  // the domain head itself sees the same gradient regardless of lambda
  for (const auto& [name, grad] : g1) {
    if (name.rfind("domain", 0) != 0) continue;
    EXPECT_EQ(g0[name], grad) << name;
    EXPECT_EQ(g2[name], grad) << name;
  }
}

TEST(MultiDomain, StructuralChecks) {
  auto d0 = env_samples(6, 0, 101);
  auto d1 = env_samples(6, 1, 102);
  auto val = env_samples(3, 0, 103);

  TrainedModel mismatched = da_model(2, 3);
  EXPECT_THROW(multi_domain_train(mismatched, {d0, d1}, val, fast_cfg(1), DAConfig{}),
               ConfigError);
  TrainedModel model = da_model(2, 2);
  EXPECT_THROW(multi_domain_train(model, {d0}, val, fast_cfg(1), DAConfig{}), ConfigError);
  EXPECT_THROW(multi_domain_train(model, {d0, {}}, val, fast_cfg(1), DAConfig{}), DataError);

  DAConfig da;
  da.domain_count = 2;
  TrainResult r = multi_domain_train(model, {d0, d1}, val, fast_cfg(3), da);
  EXPECT_EQ(r.history.size(), 3u);
  EXPECT_GE(accuracy_on(model, val), 0.9);
}

TEST(MultiDomain, ThreeDomainsTrain) {
  auto d0 = env_samples(4, 0, 111);
  auto d1 = env_samples(4, 1, 112);
  auto d2 = env_samples(4, 2, 113);
  TrainedModel model = da_model(2, 3);
  DAConfig da;
  da.domain_count = 3;
  da.mode = DomainMode::MultiIndex;
  TrainResult r = multi_domain_train(model, {d0, d1, d2}, d0, fast_cfg(2), da);
  EXPECT_EQ(r.history.size(), 2u);
}
