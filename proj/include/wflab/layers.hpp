#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "wflab/error.hpp"
#include "wflab/tensor.hpp"

namespace wflab {

template <class T>
class Layer {
 public:
  virtual ~Layer() = default;
  // train=true selects batch statistics in BatchNorm; everything else is
  // mode-independent.
  virtual Tensor<T> forward(const Tensor<T>& x, bool train) = 0;
  virtual Tensor<T> backward(const Tensor<T>& gy) = 0;
  virtual void collect_params(std::vector<Param<T>*>& out) {}
};

// 1-D convolution, cross-correlation convention (no kernel flip),
// zero padding. x: [B,Cin,L] -> y: [B,Cout,L'].
template <class T>
class Conv1d : public Layer<T> {
 public:
  Conv1d(std::string name, int in_ch, int out_ch, int kernel, int stride, int padding)
      : name_(std::move(name)),
        in_ch_(in_ch),
        out_ch_(out_ch),
        kernel_(kernel),
        stride_(stride),
        pad_(padding),
        w_(name_ + ".w", {out_ch, in_ch, kernel}),
        b_(name_ + ".b", {out_ch}) {}

  static int out_len(int in_len, int kernel, int stride, int padding) {
    if (in_len + 2 * padding < kernel) throw ConfigError("conv1d: input shorter than kernel");
    return (in_len + 2 * padding - kernel) / stride + 1;
  }

  Tensor<T> forward(const Tensor<T>& x, bool) override {
    if (x.shape.size() != 3 || x.dim(1) != in_ch_)
      throw DataError("conv1d " + name_ + ": expected [B," + std::to_string(in_ch_) + ",L]");
    x_ = x;
    int batch = x.dim(0), in_len = x.dim(2);
    int len = out_len(in_len, kernel_, stride_, pad_);
    Tensor<T> y({batch, out_ch_, len});
    for (int b = 0; b < batch; ++b) {
      for (int o = 0; o < out_ch_; ++o) {
        T* yrow = &y.at3(b, o, 0);
        T bias = b_.value[static_cast<size_t>(o)];
        for (int t = 0; t < len; ++t) yrow[t] = bias;
        for (int c = 0; c < in_ch_; ++c) {
          const T* xrow = &x.at3(b, c, 0);
          const T* wrow = &w_.value[(static_cast<size_t>(o) * in_ch_ + c) * kernel_];
          for (int k = 0; k < kernel_; ++k) {
            T wk = wrow[k];
            int lo = t_lo(k), hi = t_hi(k, in_len, len);
            const T* xs = xrow + (static_cast<long>(lo) * stride_ + k - pad_);
            for (int t = lo; t < hi; ++t) yrow[t] += wk * xs[static_cast<long>(t - lo) * stride_];
          }
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    int batch = x_.dim(0), in_len = x_.dim(2), len = gy.dim(2);
    Tensor<T> gx(x_.shape);
    for (int b = 0; b < batch; ++b) {
      for (int o = 0; o < out_ch_; ++o) {
        const T* grow = &gy.at3(b, o, 0);
        T gb = T(0);
        for (int t = 0; t < len; ++t) gb += grow[t];
        b_.grad[static_cast<size_t>(o)] += gb;
        for (int c = 0; c < in_ch_; ++c) {
          const T* xrow = &x_.at3(b, c, 0);
          T* gxrow = &gx.at3(b, c, 0);
          const size_t wbase = (static_cast<size_t>(o) * in_ch_ + c) * kernel_;
          for (int k = 0; k < kernel_; ++k) {
            int lo = t_lo(k), hi = t_hi(k, in_len, len);
            T wk = w_.value[wbase + static_cast<size_t>(k)];
            T gw = T(0);
            const long off = static_cast<long>(lo) * stride_ + k - pad_;
            for (int t = lo; t < hi; ++t) {
              long xi = off + static_cast<long>(t - lo) * stride_;
              gw += grow[t] * xrow[xi];
              gxrow[xi] += grow[t] * wk;
            }
            w_.grad[wbase + static_cast<size_t>(k)] += gw;
          }
        }
      }
    }
    return gx;
  }

  void collect_params(std::vector<Param<T>*>& out) override {
    out.push_back(&w_);
    out.push_back(&b_);
  }

  Param<T>& weight() { return w_; }
  Param<T>& bias() { return b_; }

 private:
  int t_lo(int k) const {
    int lo = 0;
    if (k < pad_) lo = (pad_ - k + stride_ - 1) / stride_;
    return lo;
  }
  int t_hi(int k, int in_len, int out_len_v) const {
    // largest t with t*stride + k - pad <= in_len-1
    int hi = (in_len - 1 - k + pad_) / stride_ + 1;
    return std::min(hi, out_len_v);
  }

  std::string name_;
  int in_ch_, out_ch_, kernel_, stride_, pad_;
  Param<T> w_, b_;
  Tensor<T> x_;
};

// Batch normalization over (B, L) per channel; population variance. In
// train mode running stats update as (1-momentum)*running + momentum*batch
// unless the layer's stats are frozen, in which case running stats are
// used for normalization and left untouched (gradients still flow through
// the affine transform).
template <class T>
class BatchNorm1d : public Layer<T> {
 public:
  BatchNorm1d(std::string name, int channels, double momentum = 0.1, double epsilon = 1e-5)
      : name_(std::move(name)),
        channels_(channels),
        momentum_(momentum),
        eps_(epsilon),
        gamma_(name_ + ".gamma", {channels}),
        beta_(name_ + ".beta", {channels}),
        run_mean_(name_ + ".running_mean", {channels}, false),
        run_var_(name_ + ".running_var", {channels}, false) {
    std::fill(gamma_.value.begin(), gamma_.value.end(), T(1));
    std::fill(run_var_.value.begin(), run_var_.value.end(), T(1));
  }

  void set_stats_frozen(bool frozen) { stats_frozen_ = frozen; }
  bool stats_frozen() const { return stats_frozen_; }
  void mark_stats_loaded() { initialized_ = true; }
  bool stats_initialized() const { return initialized_; }

  Tensor<T> forward(const Tensor<T>& x, bool train) override {
    if (x.shape.size() != 3 || x.dim(1) != channels_)
      throw DataError("batchnorm " + name_ + ": expected [B," + std::to_string(channels_) + ",L]");
    x_shape_ = x.shape;
    int batch = x.dim(0), len = x.dim(2);
    long n = static_cast<long>(batch) * len;
    bool batch_mode = train && !stats_frozen_;
    if (!batch_mode && !initialized_)
      throw DataError("batchnorm " + name_ + ": inference before stats were trained or loaded");
    Tensor<T> y(x.shape);
    xhat_ = Tensor<T>(x.shape);
    invstd_.assign(static_cast<size_t>(channels_), T(0));
    batch_mode_ = batch_mode;
    for (int c = 0; c < channels_; ++c) {
      T mean, var;
      if (batch_mode) {
        double sum = 0.0;
        for (int b = 0; b < batch; ++b) {
          const T* row = &x.at3(b, c, 0);
          for (int t = 0; t < len; ++t) sum += row[t];
        }
        mean = static_cast<T>(sum / static_cast<double>(n));
        double vs = 0.0;
        for (int b = 0; b < batch; ++b) {
          const T* row = &x.at3(b, c, 0);
          for (int t = 0; t < len; ++t) {
            double d = row[t] - mean;
            vs += d * d;
          }
        }
        var = static_cast<T>(vs / static_cast<double>(n));
        run_mean_.value[static_cast<size_t>(c)] =
            static_cast<T>((1.0 - momentum_) * run_mean_.value[static_cast<size_t>(c)] +
                           momentum_ * mean);
        run_var_.value[static_cast<size_t>(c)] = static_cast<T>(
            (1.0 - momentum_) * run_var_.value[static_cast<size_t>(c)] + momentum_ * var);
      } else {
        mean = run_mean_.value[static_cast<size_t>(c)];
        var = run_var_.value[static_cast<size_t>(c)];
      }
      T invstd = static_cast<T>(1.0 / std::sqrt(static_cast<double>(var) + eps_));
      invstd_[static_cast<size_t>(c)] = invstd;
      T g = gamma_.value[static_cast<size_t>(c)], be = beta_.value[static_cast<size_t>(c)];
      for (int b = 0; b < batch; ++b) {
        const T* row = &x.at3(b, c, 0);
        T* hrow = &xhat_.at3(b, c, 0);
        T* yrow = &y.at3(b, c, 0);
        for (int t = 0; t < len; ++t) {
          T h = (row[t] - mean) * invstd;
          hrow[t] = h;
          yrow[t] = g * h + be;
        }
      }
    }
    if (batch_mode) initialized_ = true;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    int batch = x_shape_[0], len = x_shape_[2];
    long n = static_cast<long>(batch) * len;
    Tensor<T> gx(x_shape_);
    for (int c = 0; c < channels_; ++c) {
      double sum_gy = 0.0, sum_gy_xhat = 0.0;
      for (int b = 0; b < batch; ++b) {
        const T* grow = &gy.at3(b, c, 0);
        const T* hrow = &xhat_.at3(b, c, 0);
        for (int t = 0; t < len; ++t) {
          sum_gy += grow[t];
          sum_gy_xhat += static_cast<double>(grow[t]) * hrow[t];
        }
      }
      gamma_.grad[static_cast<size_t>(c)] += static_cast<T>(sum_gy_xhat);
      beta_.grad[static_cast<size_t>(c)] += static_cast<T>(sum_gy);
      T g = gamma_.value[static_cast<size_t>(c)];
      T invstd = invstd_[static_cast<size_t>(c)];
      if (batch_mode_) {
        T a = static_cast<T>(g * invstd / static_cast<double>(n));
        for (int b = 0; b < batch; ++b) {
          const T* grow = &gy.at3(b, c, 0);
          const T* hrow = &xhat_.at3(b, c, 0);
          T* gxrow = &gx.at3(b, c, 0);
          for (int t = 0; t < len; ++t)
            gxrow[t] = a * (static_cast<T>(n) * grow[t] - static_cast<T>(sum_gy) -
                            hrow[t] * static_cast<T>(sum_gy_xhat));
        }
      } else {
        // fixed-stats mode: plain affine map
        T a = g * invstd;
        for (int b = 0; b < batch; ++b) {
          const T* grow = &gy.at3(b, c, 0);
          T* gxrow = &gx.at3(b, c, 0);
          for (int t = 0; t < len; ++t) gxrow[t] = a * grow[t];
        }
      }
    }
    return gx;
  }

  void collect_params(std::vector<Param<T>*>& out) override {
    out.push_back(&gamma_);
    out.push_back(&beta_);
    out.push_back(&run_mean_);
    out.push_back(&run_var_);
  }

  const std::string& name() const { return name_; }

 private:
  std::string name_;
  int channels_;
  double momentum_, eps_;
  Param<T> gamma_, beta_, run_mean_, run_var_;
  std::vector<T> invstd_;
  Tensor<T> xhat_;
  std::vector<int> x_shape_;
  bool initialized_ = false;
  bool stats_frozen_ = false;
  bool batch_mode_ = true;
};

template <class T>
class ReLU : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, bool) override {
    mask_.assign(x.v.size(), 0);
    Tensor<T> y = x;
    for (size_t i = 0; i < y.v.size(); ++i) {
      if (y.v[i] > T(0))
        mask_[i] = 1;
      else
        y.v[i] = T(0);
    }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& gy) override {
    Tensor<T> gx = gy;
    for (size_t i = 0; i < gx.v.size(); ++i)
      if (!mask_[i]) gx.v[i] = T(0);
    return gx;
  }

 private:
  std::vector<unsigned char> mask_;
};

// Max pooling over length; ties route the gradient to the first index.
template <class T>
class MaxPool1d : public Layer<T> {
 public:
  MaxPool1d(int width, int stride) : width_(width), stride_(stride) {}

  Tensor<T> forward(const Tensor<T>& x, bool) override {
    x_shape_ = x.shape;
    int batch = x.dim(0), ch = x.dim(1), in_len = x.dim(2);
    if (in_len < width_) throw ConfigError("maxpool1d: input shorter than window");
    int len = (in_len - width_) / stride_ + 1;
    Tensor<T> y({batch, ch, len});
    argmax_.assign(y.v.size(), 0);
    size_t yi = 0;
    for (int b = 0; b < batch; ++b) {
      for (int c = 0; c < ch; ++c) {
        const T* row = &x.at3(b, c, 0);
        for (int t = 0; t < len; ++t, ++yi) {
          int start = t * stride_;
          int best = start;
          T vbest = row[start];
          for (int k = 1; k < width_; ++k) {
            if (row[start + k] > vbest) {
              vbest = row[start + k];
              best = start + k;
            }
          }
          y.v[yi] = vbest;
          argmax_[yi] = best;
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    Tensor<T> gx(x_shape_);
    int batch = x_shape_[0], ch = x_shape_[1];
    int len = gy.dim(2);
    size_t yi = 0;
    for (int b = 0; b < batch; ++b)
      for (int c = 0; c < ch; ++c)
        for (int t = 0; t < len; ++t, ++yi) gx.at3(b, c, argmax_[yi]) += gy.v[yi];
    return gx;
  }

 private:
  int width_, stride_;
  std::vector<int> argmax_;
  std::vector<int> x_shape_;
};

// [B,C,L] -> [B,C]
template <class T>
class GlobalAvgPool1d : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, bool) override {
    x_shape_ = x.shape;
    int batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
    Tensor<T> y({batch, ch});
    for (int b = 0; b < batch; ++b) {
      for (int c = 0; c < ch; ++c) {
        double s = 0.0;
        const T* row = &x.at3(b, c, 0);
        for (int t = 0; t < len; ++t) s += row[t];
        y.at2(b, c) = static_cast<T>(s / len);
      }
    }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& gy) override {
    Tensor<T> gx(x_shape_);
    int batch = x_shape_[0], ch = x_shape_[1], len = x_shape_[2];
    for (int b = 0; b < batch; ++b)
      for (int c = 0; c < ch; ++c) {
        T g = gy.at2(b, c) / static_cast<T>(len);
        T* row = &gx.at3(b, c, 0);
        for (int t = 0; t < len; ++t) row[t] = g;
      }
    return gx;
  }

 private:
  std::vector<int> x_shape_;
};

// Fully connected: x [B,F] -> y [B,O]
template <class T>
class FullyConnected : public Layer<T> {
 public:
  FullyConnected(std::string name, int in, int out)
      : name_(std::move(name)), in_(in), out_(out), w_(name_ + ".w", {out, in}),
        b_(name_ + ".b", {out}) {}

  Tensor<T> forward(const Tensor<T>& x, bool) override {
    if (x.shape.size() != 2 || x.dim(1) != in_)
      throw DataError("fc " + name_ + ": expected [B," + std::to_string(in_) + "]");
    x_ = x;
    int batch = x.dim(0);
    Tensor<T> y({batch, out_});
    for (int b = 0; b < batch; ++b) {
      const T* xrow = &x.at2(b, 0);
      for (int o = 0; o < out_; ++o) {
        const T* wrow = &w_.value[static_cast<size_t>(o) * in_];
        T s = b_.value[static_cast<size_t>(o)];
        for (int f = 0; f < in_; ++f) s += wrow[f] * xrow[f];
        y.at2(b, o) = s;
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    int batch = x_.dim(0);
    Tensor<T> gx({batch, in_});
    for (int b = 0; b < batch; ++b) {
      const T* grow = &gy.at2(b, 0);
      const T* xrow = &x_.at2(b, 0);
      T* gxrow = &gx.at2(b, 0);
      for (int o = 0; o < out_; ++o) {
        T g = grow[o];
        b_.grad[static_cast<size_t>(o)] += g;
        const T* wrow = &w_.value[static_cast<size_t>(o) * in_];
        T* gwrow = &w_.grad[static_cast<size_t>(o) * in_];
        for (int f = 0; f < in_; ++f) {
          gwrow[f] += g * xrow[f];
          gxrow[f] += g * wrow[f];
        }
      }
    }
    return gx;
  }

  void collect_params(std::vector<Param<T>*>& out) override {
    out.push_back(&w_);
    out.push_back(&b_);
  }

  Param<T>& weight() { return w_; }

 private:
  std::string name_;
  int in_, out_;
  Param<T> w_, b_;
  Tensor<T> x_;
};

// Gradient reversal: identity forward, -lambda * grad backward.
template <class T>
class GradReverse : public Layer<T> {
 public:
  explicit GradReverse(double lambda = 1.0) : lambda_(lambda) {}
  void set_lambda(double l) { lambda_ = l; }
  double lambda() const { return lambda_; }

  Tensor<T> forward(const Tensor<T>& x, bool) override { return x; }
  Tensor<T> backward(const Tensor<T>& gy) override {
    Tensor<T> gx(gy.shape);
    if (lambda_ != 0.0) {
      T neg = static_cast<T>(-lambda_);
      for (size_t i = 0; i < gy.v.size(); ++i) gx.v[i] = neg * gy.v[i];
    }
    return gx;
  }

 private:
  double lambda_;
};

// Mean softmax cross-entropy over the batch; grad = (softmax - onehot)/B.
template <class T>
struct SoftmaxCeResult {
  double loss = 0.0;
  Tensor<T> grad_logits;
  Tensor<T> probs;
};

template <class T>
SoftmaxCeResult<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
  int batch = logits.dim(0), classes = logits.dim(1);
  if (static_cast<int>(labels.size()) != batch)
    throw DataError("softmax_cross_entropy: label count mismatch");
  SoftmaxCeResult<T> r;
  r.grad_logits = Tensor<T>(logits.shape);
  r.probs = Tensor<T>(logits.shape);
  double total = 0.0;
  for (int b = 0; b < batch; ++b) {
    int label = labels[static_cast<size_t>(b)];
    if (label < 0 || label >= classes)
      throw DataError("softmax_cross_entropy: label out of range");
    const T* row = &logits.at2(b, 0);
    T mx = row[0];
    for (int c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
    double denom = 0.0;
    for (int c = 0; c < classes; ++c) denom += std::exp(static_cast<double>(row[c] - mx));
    double log_denom = std::log(denom);
    total += log_denom - static_cast<double>(row[label] - mx);
    for (int c = 0; c < classes; ++c) {
      double p = std::exp(static_cast<double>(row[c] - mx) - log_denom);
      r.probs.at2(b, c) = static_cast<T>(p);
      r.grad_logits.at2(b, c) =
          static_cast<T>((p - (c == label ? 1.0 : 0.0)) / static_cast<double>(batch));
    }
  }
  r.loss = total / static_cast<double>(batch);
  return r;
}

}  // namespace wflab
