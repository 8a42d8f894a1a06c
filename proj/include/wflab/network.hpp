#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "wflab/error.hpp"
#include "wflab/layers.hpp"
#include "wflab/rng.hpp"
#include "wflab/tensor.hpp"

namespace wflab {

enum class Preset { Tiny, Base, Large, Custom };

inline const char* to_string(Preset p) {
  switch (p) {
    case Preset::Tiny: return "tiny";
    case Preset::Base: return "base";
    case Preset::Large: return "large";
    case Preset::Custom: return "custom";
  }
  return "custom";
}

inline Preset preset_from_string(const std::string& s) {
  if (s == "tiny") return Preset::Tiny;
  if (s == "base") return Preset::Base;
  if (s == "large") return Preset::Large;
  if (s == "custom") return Preset::Custom;
  throw ConfigError("unknown preset: " + s);
}

struct BlockConfig {
  int n_conv = 2;
  int channels = 64;
  int stride = 2;  // applied by the first conv of the block
};

struct ArchitectureConfig {
  Preset preset = Preset::Custom;
  int in_channels = 2;
  int input_len = 500;
  int class_count = 2;
  int domain_count = 0;  // 0: no domain head
  int stem_channels = 64, stem_kernel = 7, stem_stride = 2;
  int kernel = 3;
  std::vector<BlockConfig> blocks;
  std::vector<int> fc_hidden;  // hidden FC widths; a final FC to class_count follows
  int domain_hidden = 256;

  static ArchitectureConfig make(Preset p, int classes, int domains = 0) {
    ArchitectureConfig cfg;
    cfg.preset = p;
    cfg.class_count = classes;
    cfg.domain_count = domains;
    switch (p) {
      case Preset::Tiny:
        cfg.stem_channels = 16;
        cfg.blocks = {{2, 32, 2}, {2, 64, 2}};
        cfg.fc_hidden = {64};
        break;
      case Preset::Base:
        cfg.stem_channels = 64;
        cfg.blocks = {{3, 64, 2}, {3, 128, 2}, {3, 256, 2}, {4, 512, 2}, {4, 768, 2}};
        cfg.fc_hidden = {512, 256};
        break;
      case Preset::Large:
        cfg.stem_channels = 64;
        cfg.blocks = {{4, 64, 2}, {4, 128, 2}, {5, 256, 2}, {5, 512, 2}, {5, 1024, 2}};
        cfg.fc_hidden = {512, 256};
        break;
      case Preset::Custom:
        break;
    }
    cfg.validate();
    return cfg;
  }

  int conv_layer_count() const {
    int n = 0;
    for (const auto& b : blocks) n += b.n_conv;
    return n;
  }

  void validate() const {
    if (class_count < 1) throw ConfigError("arch: class_count must be >= 1");
    if (domain_count == 1) throw ConfigError("arch: domain_count must be 0 or >= 2");
    if (blocks.empty()) throw ConfigError("arch: need at least one residual block");
    for (const auto& b : blocks) {
      if (b.n_conv < 1 || b.channels < 1 || b.stride < 1)
        throw ConfigError("arch: invalid block config");
    }
    if (preset == Preset::Base &&
        (blocks.size() != 5 || conv_layer_count() != 17 || fc_hidden.size() != 2))
      throw ConfigError("arch: Base preset must have 17 conv layers in 5 blocks and 3 FC layers");
    if (preset == Preset::Large && conv_layer_count() != 23)
      throw ConfigError("arch: Large preset must have 23 conv layers");
    if (preset == Preset::Tiny && conv_layer_count() + 1 > 6)
      throw ConfigError("arch: Tiny preset must have at most 6 conv layers");
  }

  std::string to_text() const {
    std::ostringstream out;
    out << "preset = " << wflab::to_string(preset) << "\n";
    out << "in_channels = " << in_channels << "\n";
    out << "input_len = " << input_len << "\n";
    out << "class_count = " << class_count << "\n";
    out << "domain_count = " << domain_count << "\n";
    out << "stem = " << stem_channels << ":" << stem_kernel << ":" << stem_stride << "\n";
    out << "kernel = " << kernel << "\n";
    out << "blocks =";
    for (size_t i = 0; i < blocks.size(); ++i)
      out << (i ? "," : "") << " " << blocks[i].n_conv << ":" << blocks[i].channels << ":"
          << blocks[i].stride;
    out << "\n";
    out << "fc_hidden =";
    for (size_t i = 0; i < fc_hidden.size(); ++i) out << (i ? "," : "") << " " << fc_hidden[i];
    out << "\n";
    out << "domain_hidden = " << domain_hidden << "\n";
    return out.str();
  }

  std::uint64_t fingerprint() const { return fnv1a64(to_text()); }
};

// Residual block: [conv-bn-relu]*(n-1), conv-bn, add skip, relu. The skip
// path gets a 1x1 strided projection (+BN) whenever shape changes.
template <class T>
class ResidualBlock : public Layer<T> {
 public:
  ResidualBlock(const std::string& name, int in_ch, const BlockConfig& cfg, int kernel) {
    int ch = cfg.channels;
    int pad = kernel / 2;
    for (int i = 0; i < cfg.n_conv; ++i) {
      std::string lname = name + ".conv" + std::to_string(i + 1);
      int stride = (i == 0) ? cfg.stride : 1;
      int cin = (i == 0) ? in_ch : ch;
      convs_.push_back(std::make_unique<Conv1d<T>>(lname, cin, ch, kernel, stride, pad));
      bns_.push_back(std::make_unique<BatchNorm1d<T>>(lname + ".bn", ch));
    }
    needs_proj_ = (in_ch != ch) || (cfg.stride != 1);
    if (needs_proj_) {
      proj_conv_ = std::make_unique<Conv1d<T>>(name + ".proj", in_ch, ch, 1, cfg.stride, 0);
      proj_bn_ = std::make_unique<BatchNorm1d<T>>(name + ".proj.bn", ch);
    }
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) override {
    Tensor<T> h = x;
    relu_masks_.assign(convs_.size() - 1, {});
    for (size_t i = 0; i < convs_.size(); ++i) {
      h = convs_[i]->forward(h, train);
      h = bns_[i]->forward(h, train);
      if (i + 1 < convs_.size()) {
        relu_masks_[i].assign(h.v.size(), 0);
        for (size_t j = 0; j < h.v.size(); ++j) {
          if (h.v[j] > T(0))
            relu_masks_[i][j] = 1;
          else
            h.v[j] = T(0);
        }
      }
    }
    Tensor<T> skip = x;
    if (needs_proj_) {
      skip = proj_conv_->forward(x, train);
      skip = proj_bn_->forward(skip, train);
    }
    if (skip.v.size() != h.v.size())
      throw ConfigError("residual block: skip/main shape mismatch");
    out_mask_.assign(h.v.size(), 0);
    for (size_t j = 0; j < h.v.size(); ++j) {
      T s = h.v[j] + skip.v[j];
      if (s > T(0)) {
        out_mask_[j] = 1;
        h.v[j] = s;
      } else {
        h.v[j] = T(0);
      }
    }
    return h;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    Tensor<T> g = gy;
    for (size_t j = 0; j < g.v.size(); ++j)
      if (!out_mask_[j]) g.v[j] = T(0);
    Tensor<T> gmain = g;
    for (size_t i = convs_.size(); i-- > 0;) {
      gmain = bns_[i]->backward(gmain);
      gmain = convs_[i]->backward(gmain);
      if (i > 0) {
        for (size_t j = 0; j < gmain.v.size(); ++j)
          if (!relu_masks_[i - 1][j]) gmain.v[j] = T(0);
      }
    }
    if (needs_proj_) {
      Tensor<T> gskip = proj_bn_->backward(g);
      gskip = proj_conv_->backward(gskip);
      for (size_t j = 0; j < gmain.v.size(); ++j) gmain.v[j] += gskip.v[j];
    } else {
      for (size_t j = 0; j < gmain.v.size(); ++j) gmain.v[j] += g.v[j];
    }
    return gmain;
  }

  void collect_params(std::vector<Param<T>*>& out) override {
    for (size_t i = 0; i < convs_.size(); ++i) {
      convs_[i]->collect_params(out);
      bns_[i]->collect_params(out);
    }
    if (needs_proj_) {
      proj_conv_->collect_params(out);
      proj_bn_->collect_params(out);
    }
  }

  void for_each_bn(const std::function<void(BatchNorm1d<T>&)>& fn) {
    for (auto& bn : bns_) fn(*bn);
    if (proj_bn_) fn(*proj_bn_);
  }

 private:
  std::vector<std::unique_ptr<Conv1d<T>>> convs_;
  std::vector<std::unique_ptr<BatchNorm1d<T>>> bns_;
  std::unique_ptr<Conv1d<T>> proj_conv_;
  std::unique_ptr<BatchNorm1d<T>> proj_bn_;
  bool needs_proj_ = false;
  std::vector<std::vector<unsigned char>> relu_masks_;
  std::vector<unsigned char> out_mask_;
};

// WFNet: stem conv -> residual blocks -> global average pool = encoding;
// a site head (FC stack) and an optional gradient-reversed domain head
// both read the encoding.
template <class T>
class Network {
 public:
  explicit Network(const ArchitectureConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    int pad = cfg.stem_kernel / 2;
    stem_conv_ = std::make_unique<Conv1d<T>>("stem", cfg.in_channels, cfg.stem_channels,
                                             cfg.stem_kernel, cfg.stem_stride, pad);
    stem_bn_ = std::make_unique<BatchNorm1d<T>>("stem.bn", cfg.stem_channels);
    int ch = cfg.stem_channels;
    int len = Conv1d<T>::out_len(cfg.input_len, cfg.stem_kernel, cfg.stem_stride, pad);
    for (size_t i = 0; i < cfg.blocks.size(); ++i) {
      const auto& b = cfg.blocks[i];
      blocks_.push_back(std::make_unique<ResidualBlock<T>>(
          "block" + std::to_string(i + 1), ch, b, cfg.kernel));
      ch = b.channels;
      len = Conv1d<T>::out_len(len, cfg.kernel, b.stride, cfg.kernel / 2);
      if (len < 1) throw ConfigError("arch: feature length collapsed to zero");
    }
    encoding_dim_ = ch;
    int in = ch;
    for (size_t i = 0; i < cfg.fc_hidden.size(); ++i) {
      site_fcs_.push_back(std::make_unique<FullyConnected<T>>(
          "fc" + std::to_string(i + 1), in, cfg.fc_hidden[static_cast<size_t>(i)]));
      in = cfg.fc_hidden[static_cast<size_t>(i)];
    }
    site_fcs_.push_back(std::make_unique<FullyConnected<T>>(
        "fc" + std::to_string(cfg.fc_hidden.size() + 1), in, cfg.class_count));
    if (cfg.domain_count >= 2) {
      grl_ = std::make_unique<GradReverse<T>>(1.0);
      domain_fc1_ = std::make_unique<FullyConnected<T>>("domain.fc1", encoding_dim_,
                                                        cfg.domain_hidden);
      domain_fc2_ = std::make_unique<FullyConnected<T>>("domain.fc2", cfg.domain_hidden,
                                                        cfg.domain_count);
    }
  }

  const ArchitectureConfig& config() const { return cfg_; }
  int encoding_dim() const { return encoding_dim_; }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    stem_conv_->collect_params(out);
    stem_bn_->collect_params(out);
    for (auto& b : blocks_) b->collect_params(out);
    for (auto& f : site_fcs_) f->collect_params(out);
    if (domain_fc1_) {
      domain_fc1_->collect_params(out);
      domain_fc2_->collect_params(out);
    }
    return out;
  }

  // Names of every extractor (stem + blocks) parameter; the conventional
  // freeze set for transfer.
  std::vector<std::string> feature_param_names() {
    std::vector<Param<T>*> out;
    stem_conv_->collect_params(out);
    stem_bn_->collect_params(out);
    for (auto& b : blocks_) b->collect_params(out);
    std::vector<std::string> names;
    names.reserve(out.size());
    for (auto* p : out) names.push_back(p->name);
    return names;
  }

  // He-uniform for conv/FC weights, zero biases, gamma=1, beta=0.
  void init_params(std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x1417));
    for (Param<T>* p : params()) {
      bool is_weight = p->name.size() > 2 && p->name.compare(p->name.size() - 2, 2, ".w") == 0;
      if (!is_weight) continue;  // biases/gamma/beta/running stats keep their defaults
      long fan_in = 1;
      for (size_t i = 1; i < p->shape.size(); ++i) fan_in *= p->shape[i];
      double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (auto& v : p->value) v = static_cast<T>(rng.uniform(-limit, limit));
    }
  }

  long param_count() {
    long n = 0;
    for (Param<T>* p : params())
      if (p->trainable) n += static_cast<long>(p->value.size());
    return n;
  }

  void set_grl_lambda(double lambda) {
    if (!grl_) throw ConfigError("network has no domain head");
    grl_->set_lambda(lambda);
  }

  void zero_grad() {
    for (Param<T>* p : params()) p->zero_grad();
  }

  // Freeze running-stat updates for the BN layers whose gamma param name
  // appears in `frozen`; used by finetune so frozen-layer stats stay fixed.
  void freeze_bn_stats(const std::vector<std::string>& frozen) {
    auto is_frozen = [&](const std::string& gamma_name) {
      for (const auto& n : frozen)
        if (n == gamma_name) return true;
      return false;
    };
    auto apply = [&](BatchNorm1d<T>& bn) {
      if (is_frozen(bn.name() + ".gamma")) bn.set_stats_frozen(true);
    };
    apply(*stem_bn_);
    for (auto& b : blocks_) b->for_each_bn(apply);
  }

  // Pin/unpin every BN layer to its running stats (used for the domain
  // pass, which must not disturb the supervised trajectory).
  void set_all_bn_stats_frozen(bool frozen) {
    stem_bn_->set_stats_frozen(frozen);
    for (auto& b : blocks_)
      b->for_each_bn([&](BatchNorm1d<T>& bn) { bn.set_stats_frozen(frozen); });
  }

  void mark_bn_stats_loaded() {
    stem_bn_->mark_stats_loaded();
    for (auto& b : blocks_) b->for_each_bn([](BatchNorm1d<T>& bn) { bn.mark_stats_loaded(); });
  }

  Tensor<T> forward_features(const Tensor<T>& x, bool train) {
    Tensor<T> h = stem_conv_->forward(x, train);
    h = stem_bn_->forward(h, train);
    h = stem_relu_.forward(h, train);
    for (auto& b : blocks_) h = b->forward(h, train);
    return gap_.forward(h, train);
  }

  Tensor<T> forward_site(const Tensor<T>& enc, bool train) {
    Tensor<T> h = enc;
    site_relus_.resize(site_fcs_.size() - 1);
    for (size_t i = 0; i < site_fcs_.size(); ++i) {
      h = site_fcs_[i]->forward(h, train);
      if (i + 1 < site_fcs_.size()) h = site_relus_[i].forward(h, train);
    }
    return h;
  }

  Tensor<T> forward_domain(const Tensor<T>& enc, bool train) {
    if (!grl_) throw ConfigError("network has no domain head");
    Tensor<T> h = grl_->forward(enc, train);
    h = domain_fc1_->forward(h, train);
    h = domain_relu_.forward(h, train);
    return domain_fc2_->forward(h, train);
  }

  Tensor<T> backward_site(const Tensor<T>& glogits) {
    Tensor<T> g = glogits;
    for (size_t i = site_fcs_.size(); i-- > 0;) {
      g = site_fcs_[i]->backward(g);
      if (i > 0) g = site_relus_[i - 1].backward(g);
    }
    return g;
  }

  Tensor<T> backward_domain(const Tensor<T>& glogits) {
    Tensor<T> g = domain_fc2_->backward(glogits);
    g = domain_relu_.backward(g);
    g = domain_fc1_->backward(g);
    return grl_->backward(g);
  }

  void backward_features(const Tensor<T>& genc) {
    Tensor<T> g = gap_.backward(genc);
    for (size_t i = blocks_.size(); i-- > 0;) g = blocks_[i]->backward(g);
    g = stem_relu_.backward(g);
    g = stem_bn_->backward(g);
    stem_conv_->backward(g);
  }

  // Supervised convenience: full forward to site logits.
  Tensor<T> forward(const Tensor<T>& x, bool train) {
    return forward_site(forward_features(x, train), train);
  }

 private:
  ArchitectureConfig cfg_;
  std::unique_ptr<Conv1d<T>> stem_conv_;
  std::unique_ptr<BatchNorm1d<T>> stem_bn_;
  ReLU<T> stem_relu_;
  std::vector<std::unique_ptr<ResidualBlock<T>>> blocks_;
  GlobalAvgPool1d<T> gap_;
  std::vector<std::unique_ptr<FullyConnected<T>>> site_fcs_;
  std::vector<ReLU<T>> site_relus_;
  std::unique_ptr<GradReverse<T>> grl_;
  std::unique_ptr<FullyConnected<T>> domain_fc1_, domain_fc2_;
  ReLU<T> domain_relu_;
  int encoding_dim_ = 0;
};

}  // namespace wflab
