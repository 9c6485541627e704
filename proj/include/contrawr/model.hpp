#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "contrawr/autodiff.hpp"
#include "contrawr/errors.hpp"
#include "contrawr/layers.hpp"
#include "contrawr/rng.hpp"
#include "contrawr/stft.hpp"

namespace contrawr {

// A named parameter array. Running statistics live here too, flagged
// non-trainable: the optimizer and EMA treat them differently.
template <typename S>
struct Param {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<S> value;
  std::vector<S> grad;
  bool trainable = true;

  void init_zero(std::string n, std::vector<std::size_t> sh, S fill = S(0)) {
    name = std::move(n);
    shape = std::move(sh);
    value.assign(numel(shape), fill);
    grad.assign(value.size(), S(0));
  }
};

enum class ForwardMode { train, eval };

// Binds parameters to graph leaves for one forward/backward pass and copies
// the resulting gradients back afterwards.
template <typename S>
struct GraphBinding {
  std::vector<std::pair<Param<S>*, Var<S>>> bound;
  bool with_grad = false;

  Var<S> operator()(Param<S>& p) {
    auto v = make_leaf<S>(p.value, p.shape, with_grad && p.trainable);
    bound.push_back({&p, v});
    return v;
  }

  void harvest() {
    for (auto& [p, v] : bound) {
      if (!p->trainable) continue;
      if (v->grad.size() == p->grad.size()) {
        p->grad = v->grad;
      } else {
        std::fill(p->grad.begin(), p->grad.end(), S(0));
      }
    }
  }
};

struct EncoderConfig {
  std::size_t in_channels = 4;  // 2C feature channels
  std::size_t in_bins = 129;    // F
  std::size_t in_frames = 43;   // T
  std::vector<std::size_t> widths = {8, 16, 32, 64};  // stem + residual blocks
  std::size_t pool_bins = 2;
  std::size_t pool_frames = 1;

  std::size_t latent_dim() const { return widths.back() * pool_bins * pool_frames; }
};

namespace model_detail {

inline std::size_t conv_out(std::size_t in, std::size_t kernel, std::size_t stride,
                            std::size_t pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

template <typename S>
void kaiming_init(Param<S>& p, std::size_t fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (S& v : p.value) v = static_cast<S>(stddev * normal(rng));
}

}  // namespace model_detail

// STFT-CNN encoder: conv stem with batchnorm and ELU, three residual blocks
// (two conv+bn+ELU sublayers, strided 1x1 shortcut where shapes change),
// adaptive average pooling, flatten. Output is a flat latent of fixed width
// for the spectrogram shape fixed at construction.
template <typename S>
class Encoder {
 public:
  struct Block {
    Param<S> conv1_w, conv1_b, bn1_gamma, bn1_beta, bn1_mean, bn1_var;
    Param<S> conv2_w, conv2_b, bn2_gamma, bn2_beta, bn2_mean, bn2_var;
    Param<S> shortcut_w, shortcut_b;  // empty when the identity shortcut applies
    bool projected = false;
  };

  Encoder() = default;

  explicit Encoder(const EncoderConfig& config, std::uint64_t seed = 0) : config_(config) {
    if (config.widths.size() < 2) throw parameter_error("encoder: needs stem plus blocks");
    Rng rng = make_rng(derive_seed(seed, 0xf0c0de));

    std::size_t bins = model_detail::conv_out(config.in_bins, 3, 2, 1);
    std::size_t frames = model_detail::conv_out(config.in_frames, 3, 2, 1);
    stem_w_.init_zero("stem.conv.w", {config.widths[0], config.in_channels, 3, 3});
    model_detail::kaiming_init(stem_w_, config.in_channels * 9, rng);
    stem_b_.init_zero("stem.conv.b", {config.widths[0]});
    init_bn("stem.bn", config.widths[0], stem_bn_gamma_, stem_bn_beta_, stem_bn_mean_,
            stem_bn_var_);

    std::size_t cin = config.widths[0];
    for (std::size_t i = 1; i < config.widths.size(); ++i) {
      const std::size_t cout = config.widths[i];
      const std::string tag = "block" + std::to_string(i);
      Block block;
      block.conv1_w.init_zero(tag + ".conv1.w", {cout, cin, 3, 3});
      model_detail::kaiming_init(block.conv1_w, cin * 9, rng);
      block.conv1_b.init_zero(tag + ".conv1.b", {cout});
      init_bn(tag + ".bn1", cout, block.bn1_gamma, block.bn1_beta, block.bn1_mean,
              block.bn1_var);
      block.conv2_w.init_zero(tag + ".conv2.w", {cout, cout, 3, 3});
      model_detail::kaiming_init(block.conv2_w, cout * 9, rng);
      block.conv2_b.init_zero(tag + ".conv2.b", {cout});
      init_bn(tag + ".bn2", cout, block.bn2_gamma, block.bn2_beta, block.bn2_mean,
              block.bn2_var);
      block.projected = true;  // every block downsamples, so shapes change
      block.shortcut_w.init_zero(tag + ".shortcut.w", {cout, cin, 1, 1});
      model_detail::kaiming_init(block.shortcut_w, cin, rng);
      block.shortcut_b.init_zero(tag + ".shortcut.b", {cout});
      blocks_.push_back(std::move(block));

      bins = model_detail::conv_out(bins, 3, 2, 1);
      frames = model_detail::conv_out(frames, 3, 2, 1);
      cin = cout;
    }
    if (bins < config.pool_bins || frames < config.pool_frames) {
      throw shape_error("encoder: spectrogram " + std::to_string(config.in_bins) + "x" +
                        std::to_string(config.in_frames) + " collapses below the " +
                        std::to_string(config.pool_bins) + "x" +
                        std::to_string(config.pool_frames) + " pooling grid");
    }
  }

  const EncoderConfig& config() const { return config_; }
  std::size_t latent_dim() const { return config_.latent_dim(); }

  // Builds the forward graph for a [B x 2C x F x T] input.
  Var<S> forward(Var<S> x, ForwardMode mode, GraphBinding<S>& bind) {
    if (x->shape.size() != 4 || x->shape[1] != config_.in_channels ||
        x->shape[2] != config_.in_bins || x->shape[3] != config_.in_frames) {
      throw shape_error("encoder stem: input shape does not match construction shape");
    }
    const bool train = mode == ForwardMode::train;
    auto h = conv2d(x, bind(stem_w_), bind(stem_b_), 2, 1, "stem.conv");
    h = batchnorm2d(h, bind(stem_bn_gamma_), bind(stem_bn_beta_), stem_bn_mean_.value.data(),
                    stem_bn_var_.value.data(), train, train, S(0.1), S(1e-5), "stem.bn");
    h = elu(h);
    for (Block& block : blocks_) {
      auto y = conv2d(h, bind(block.conv1_w), bind(block.conv1_b), 2, 1, block.conv1_w.name);
      y = batchnorm2d(y, bind(block.bn1_gamma), bind(block.bn1_beta),
                      block.bn1_mean.value.data(), block.bn1_var.value.data(), train, train,
                      S(0.1), S(1e-5), block.bn1_gamma.name);
      y = elu(y);
      y = conv2d(y, bind(block.conv2_w), bind(block.conv2_b), 1, 1, block.conv2_w.name);
      y = batchnorm2d(y, bind(block.bn2_gamma), bind(block.bn2_beta),
                      block.bn2_mean.value.data(), block.bn2_var.value.data(), train, train,
                      S(0.1), S(1e-5), block.bn2_gamma.name);
      auto sc = block.projected
                    ? conv2d(h, bind(block.shortcut_w), bind(block.shortcut_b), 2, 0,
                             block.shortcut_w.name)
                    : h;
      h = elu(add(y, sc));
    }
    h = adaptive_avg_pool2d(h, config_.pool_bins, config_.pool_frames);
    return reshape(h, {x->shape[0], latent_dim()});
  }

  std::vector<Param<S>*> params() {
    std::vector<Param<S>*> out = {&stem_w_, &stem_b_, &stem_bn_gamma_, &stem_bn_beta_,
                                  &stem_bn_mean_, &stem_bn_var_};
    for (Block& block : blocks_) {
      out.push_back(&block.conv1_w);
      out.push_back(&block.conv1_b);
      out.push_back(&block.bn1_gamma);
      out.push_back(&block.bn1_beta);
      out.push_back(&block.bn1_mean);
      out.push_back(&block.bn1_var);
      out.push_back(&block.conv2_w);
      out.push_back(&block.conv2_b);
      out.push_back(&block.bn2_gamma);
      out.push_back(&block.bn2_beta);
      out.push_back(&block.bn2_mean);
      out.push_back(&block.bn2_var);
      if (block.projected) {
        out.push_back(&block.shortcut_w);
        out.push_back(&block.shortcut_b);
      }
    }
    return out;
  }

 private:
  void init_bn(const std::string& tag, std::size_t ch, Param<S>& gamma, Param<S>& beta,
               Param<S>& mean, Param<S>& var) {
    gamma.init_zero(tag + ".gamma", {ch}, S(1));
    beta.init_zero(tag + ".beta", {ch});
    mean.init_zero(tag + ".running_mean", {ch});
    mean.trainable = false;
    var.init_zero(tag + ".running_var", {ch}, S(1));
    var.trainable = false;
  }

  EncoderConfig config_;
  Param<S> stem_w_, stem_b_, stem_bn_gamma_, stem_bn_beta_, stem_bn_mean_, stem_bn_var_;
  std::vector<Block> blocks_;
};

// Two fully connected layers with ReLU between, output L2-normalized onto
// the unit hypersphere. Hidden width equals the latent width.
template <typename S>
class Projector {
 public:
  Projector() = default;

  Projector(std::size_t latent_dim, std::size_t projection_dim, std::uint64_t seed = 0) {
    Rng rng = make_rng(derive_seed(seed, 0x9107));
    fc1_w_.init_zero("proj.fc1.w", {latent_dim, latent_dim});
    model_detail::kaiming_init(fc1_w_, latent_dim, rng);
    fc1_b_.init_zero("proj.fc1.b", {latent_dim});
    fc2_w_.init_zero("proj.fc2.w", {projection_dim, latent_dim});
    model_detail::kaiming_init(fc2_w_, latent_dim, rng);
    fc2_b_.init_zero("proj.fc2.b", {projection_dim});
  }

  std::size_t projection_dim() const { return fc2_w_.shape.empty() ? 0 : fc2_w_.shape[0]; }

  Var<S> forward(Var<S> h, GraphBinding<S>& bind) {
    auto z = linear(h, bind(fc1_w_), bind(fc1_b_), "proj.fc1");
    z = relu(z);
    z = linear(z, bind(fc2_w_), bind(fc2_b_), "proj.fc2");
    return l2_normalize_rows(z);
  }

  std::vector<Param<S>*> params() { return {&fc1_w_, &fc1_b_, &fc2_w_, &fc2_b_}; }

 private:
  Param<S> fc1_w_, fc1_b_, fc2_w_, fc2_b_;
};

// Encoder + projector pair; the unit both the online and target sides of
// the dual-network trainer are made of.
template <typename S>
struct Network {
  Encoder<S> encoder;
  Projector<S> projector;

  Network() = default;
  Network(const EncoderConfig& config, std::size_t projection_dim, std::uint64_t seed)
      : encoder(config, derive_seed(seed, 1)),
        projector(config.latent_dim(), projection_dim, derive_seed(seed, 2)) {}

  std::vector<Param<S>*> params() {
    auto out = encoder.params();
    auto proj = projector.params();
    out.insert(out.end(), proj.begin(), proj.end());
    return out;
  }

  // Projection of a feature batch: z = g(f(x)), rows on the unit sphere.
  Var<S> project_features(Var<S> x, ForwardMode mode, GraphBinding<S>& bind) {
    return projector.forward(encoder.forward(x, mode, bind), bind);
  }
};

// Copies values (not gradients) from src into dst; shapes must agree.
template <typename S>
void copy_params(Network<S>& src, Network<S>& dst) {
  auto from = src.params();
  auto to = dst.params();
  if (from.size() != to.size()) throw contract_error("copy_params: network layouts differ");
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i]->shape != to[i]->shape) {
      throw contract_error("copy_params: shape mismatch at " + from[i]->name);
    }
    to[i]->value = from[i]->value;
  }
}

// Packs a feature batch into a graph constant of shape [B x 2C x F x T].
template <typename S>
Var<S> features_to_leaf(const std::vector<const FeatureTensor*>& batch) {
  if (batch.empty()) throw parameter_error("features_to_leaf: empty batch");
  const FeatureTensor& first = *batch.front();
  std::vector<S> values;
  values.reserve(batch.size() * first.size());
  for (const FeatureTensor* f : batch) {
    if (f->feature_channels != first.feature_channels || f->bins != first.bins ||
        f->frames != first.frames) {
      throw shape_error("features_to_leaf: inconsistent feature shapes in batch");
    }
    for (float v : f->values) values.push_back(static_cast<S>(v));
  }
  return make_constant<S>(std::move(values),
                          {batch.size(), first.feature_channels, first.bins, first.frames});
}

}  // namespace contrawr
