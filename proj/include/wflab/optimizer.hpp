#pragma once

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "wflab/error.hpp"
#include "wflab/tensor.hpp"

namespace wflab {

enum class OptimizerKind { SgdMomentum, Adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 1e-3;
  double momentum = 0.9;  // SGD only
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;  // Adam only
};

// Running-stat params (trainable == false) are never touched. Params whose
// names appear in the frozen set are skipped entirely.
template <class T>
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

  const OptimizerConfig& config() const { return cfg_; }
  long step_count() const { return step_; }

  void step(const std::vector<Param<T>*>& params,
            const std::set<std::string>& frozen = {}) {
    if (m_.size() != params.size()) {
      m_.assign(params.size(), {});
      v_.assign(params.size(), {});
      for (size_t i = 0; i < params.size(); ++i) {
        m_[i].assign(params[i]->value.size(), T(0));
        if (cfg_.kind == OptimizerKind::Adam) v_[i].assign(params[i]->value.size(), T(0));
      }
    }
    ++step_;
    for (size_t i = 0; i < params.size(); ++i) {
      Param<T>* p = params[i];
      if (!p->trainable || frozen.count(p->name)) continue;
      if (cfg_.kind == OptimizerKind::SgdMomentum) {
        T lr = static_cast<T>(cfg_.lr), mu = static_cast<T>(cfg_.momentum);
        for (size_t j = 0; j < p->value.size(); ++j) {
          m_[i][j] = mu * m_[i][j] + p->grad[j];
          p->value[j] -= lr * m_[i][j];
        }
      } else {
        double b1 = cfg_.beta1, b2 = cfg_.beta2;
        double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_));
        double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_));
        for (size_t j = 0; j < p->value.size(); ++j) {
          double g = p->grad[j];
          double m = b1 * m_[i][j] + (1.0 - b1) * g;
          double v = b2 * v_[i][j] + (1.0 - b2) * g * g;
          m_[i][j] = static_cast<T>(m);
          v_[i][j] = static_cast<T>(v);
          p->value[j] -= static_cast<T>(cfg_.lr * (m / bc1) /
                                        (std::sqrt(v / bc2) + cfg_.epsilon));
        }
      }
    }
  }

  // Moment buffers, for checkpointing the optimizer section.
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }

 private:
  OptimizerConfig cfg_;
  long step_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

}  // namespace wflab
