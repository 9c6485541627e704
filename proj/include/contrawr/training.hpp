#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "contrawr/adam.hpp"
#include "contrawr/augment.hpp"
#include "contrawr/checkpoint.hpp"
#include "contrawr/epoch.hpp"
#include "contrawr/errors.hpp"
#include "contrawr/losses.hpp"
#include "contrawr/model.hpp"
#include "contrawr/rng.hpp"
#include "contrawr/stft.hpp"

namespace contrawr {

struct PretextConfig {
  std::size_t epochs = 100;      // training epochs (passes over the pretext set)
  std::size_t batch_size = 256;  // M
  double ema_lambda = 0.99;
  AdamConfig adam;               // lr 2e-4, weight decay 1e-4
  LossConfig loss;
  AugmentPolicy augment;
  StftConfig stft;
  std::vector<std::size_t> encoder_widths = {8, 16, 32, 64};
  std::size_t pool_bins = 2;
  std::size_t pool_frames = 1;
  std::size_t projection_dim = 0;  // 0 means "match the latent width"
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 10;
  std::string config_snapshot;     // carried into checkpoints for provenance
};

inline EncoderConfig encoder_config_for(const PretextConfig& config, std::size_t n_channels,
                                        std::size_t n_samples) {
  EncoderConfig enc;
  enc.in_channels = 2 * n_channels;
  enc.in_bins = stft_bins(config.stft.window);
  enc.in_frames = stft_frames(n_samples, config.stft.window, config.stft.hop);
  enc.widths = config.encoder_widths;
  enc.pool_bins = config.pool_bins;
  enc.pool_frames = config.pool_frames;
  return enc;
}

// Online network theta trained by gradient descent; target network phi
// updated only by EMA (it is never handed to the optimizer).
struct DualNetworkState {
  Network<float> online;
  Network<float> target;
  AdamState<float> optimizer;
  double ema_lambda = 0.99;
  std::uint64_t step = 0;

  DualNetworkState() = default;
  DualNetworkState(const EncoderConfig& encoder, std::size_t projection_dim, double lambda,
                   std::uint64_t seed)
      : online(encoder, projection_dim, seed),
        target(encoder, projection_dim, seed),
        ema_lambda(lambda) {
    copy_params(online, target);  // phi starts as an exact copy of theta
    auto params = online.params();
    optimizer.reset(params);
  }
};

// phi <- lambda * phi + (1 - lambda) * theta elementwise over every
// trainable array (batchnorm affine included). Running statistics are
// copied outright from the online network.
template <typename S>
void ema_update(Network<S>& online, Network<S>& target, double lambda) {
  if (lambda < 0.0 || lambda > 1.0) throw parameter_error("ema_update: lambda must be in [0, 1]");
  auto theta = online.params();
  auto phi = target.params();
  if (theta.size() != phi.size()) throw contract_error("ema_update: network layouts differ");
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (theta[i]->shape != phi[i]->shape) {
      throw contract_error("ema_update: shape mismatch at " + theta[i]->name);
    }
    if (!theta[i]->trainable) {
      phi[i]->value = theta[i]->value;
      continue;
    }
    // Incremental form phi += (1 - lambda)(theta - phi), evaluated in
    // double: an exact fixed point when the networks agree, and the
    // per-step rounding stays bounded by lambda-contraction instead of
    // compounding across updates.
    const double w = 1.0 - lambda;
    for (std::size_t j = 0; j < theta[i]->value.size(); ++j) {
      const double phi_j = static_cast<double>(phi[i]->value[j]);
      phi[i]->value[j] = static_cast<S>(
          phi_j + w * (static_cast<double>(theta[i]->value[j]) - phi_j));
    }
  }
}

namespace train_detail {

// Two independently augmented views of each epoch, already through STFT.
// Parallel over samples; every sample owns a seed derived from (seed, step,
// sample, view), so assembly order cannot affect the result.
inline void assemble_views(const std::vector<const Epoch*>& batch, const PretextConfig& config,
                           std::uint64_t step, std::vector<FeatureTensor>& view1,
                           std::vector<FeatureTensor>& view2) {
  const std::size_t n = batch.size();
  view1.resize(n);
  view2.resize(n);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng1 = make_rng(derive_seed(config.seed, 0xa6, step, i, 0));
    Rng rng2 = make_rng(derive_seed(config.seed, 0xa6, step, i, 1));
    view1[i] = epoch_to_features(random_augment(*batch[i], config.augment, rng1), config.stft);
    view2[i] = epoch_to_features(random_augment(*batch[i], config.augment, rng2), config.stft);
  }
}

inline std::vector<const FeatureTensor*> pointers(const std::vector<FeatureTensor>& v) {
  std::vector<const FeatureTensor*> out;
  out.reserve(v.size());
  for (const auto& f : v) out.push_back(&f);
  return out;
}

}  // namespace train_detail

// One optimizer step: augment twice, route view 1 through the online
// network, view 2 through the target network, take the batch loss, Adam on
// theta, EMA on phi. Returns the loss value.
inline double pretext_step(const std::vector<const Epoch*>& batch, DualNetworkState& state,
                           const PretextConfig& config) {
  if (batch.size() < 2) throw parameter_error("pretext_step: batch must hold at least 2 epochs");

  std::vector<FeatureTensor> view1, view2;
  train_detail::assemble_views(batch, config, state.step, view1, view2);

  // Target projections are values only; gradients never reach phi.
  GraphBinding<float> target_bind;
  auto positives_graph = state.target.project_features(
      features_to_leaf<float>(train_detail::pointers(view2)), ForwardMode::eval, target_bind);
  auto positives = make_constant<float>(positives_graph->val, positives_graph->shape);

  GraphBinding<float> online_bind;
  online_bind.with_grad = true;
  auto anchors = state.online.project_features(
      features_to_leaf<float>(train_detail::pointers(view1)), ForwardMode::train, online_bind);
  auto loss = batch_loss_graph<float>(anchors, positives, config.loss);
  const double loss_value = static_cast<double>(loss->val[0]);
  if (!std::isfinite(loss_value)) throw numeric_error("pretext_step: non-finite loss");

  backward(loss);
  online_bind.harvest();
  auto params = state.online.params();
  adam_step(params, state.optimizer, config.adam);
  ema_update(state.online, state.target, state.ema_lambda);
  ++state.step;
  return loss_value;
}

struct PretextResult {
  std::string checkpoint_path;
  std::string metrics_path;
  std::vector<double> epoch_losses;
};

// Full pretext run over shuffled batches. Writes a checkpoint every
// checkpoint_every epochs plus one at the end, and a per-epoch metrics CSV
// (epoch, mean step loss, wall seconds). Resuming from a checkpoint replays
// the exact remaining schedule because every random stream is derived from
// (seed, step) rather than from live engine state.
inline PretextResult run_pretext(const Split& split, const PretextConfig& config,
                                 const std::string& out_dir,
                                 const std::string& resume_checkpoint = "") {
  if (split.pretext.epochs.empty()) {
    throw config_error("run_pretext: pretext group is empty");
  }
  const Epoch& first = split.pretext.epochs.front();
  const EncoderConfig enc = encoder_config_for(config, first.n_channels, first.n_samples);
  const std::size_t projection_dim =
      config.projection_dim ? config.projection_dim : enc.latent_dim();

  DualNetworkState state(enc, projection_dim, config.ema_lambda,
                         derive_seed(config.seed, 0x0de1));
  std::uint64_t start_epoch = 0;
  if (!resume_checkpoint.empty()) {
    CheckpointMeta meta =
        load_checkpoint(resume_checkpoint, state.online, state.target, state.optimizer);
    state.step = meta.step;
    start_epoch = meta.epochs_done;
  }

  std::filesystem::create_directories(out_dir);
  const std::string metrics_path = out_dir + "/metrics.csv";
  std::ofstream metrics(metrics_path,
                        resume_checkpoint.empty() ? std::ios::trunc : std::ios::app);
  if (!metrics) throw data_error("run_pretext: cannot write " + metrics_path);
  if (resume_checkpoint.empty()) metrics << "epoch,mean_loss,wall_seconds\n";

  CheckpointMeta meta;
  meta.config_snapshot = config.config_snapshot;
  const std::string final_path = out_dir + "/checkpoint.ckpt";

  PretextResult result;
  result.metrics_path = metrics_path;
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<std::size_t> order(split.pretext.epochs.size());

  for (std::uint64_t epoch = start_epoch; epoch < config.epochs; ++epoch) {
    // Each epoch shuffles the identity permutation under a seed derived
    // from (master seed, epoch), so the schedule is a pure function of the
    // config and resuming replays it exactly.
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng = make_rng(derive_seed(config.seed, 0x50f, epoch));
    shuffle(order, shuffle_rng);

    double epoch_loss = 0.0;
    std::size_t steps = 0;
    for (std::size_t at = 0; at + 2 <= order.size(); at += config.batch_size) {
      const std::size_t take = std::min(config.batch_size, order.size() - at);
      if (take < 2) break;
      std::vector<const Epoch*> batch;
      batch.reserve(take);
      for (std::size_t i = 0; i < take; ++i) {
        batch.push_back(&split.pretext.epochs[order[at + i]]);
      }
      epoch_loss += pretext_step(batch, state, config);
      ++steps;
    }
    if (steps == 0) throw config_error("run_pretext: pretext group smaller than one batch");

    const double mean_loss = epoch_loss / static_cast<double>(steps);
    result.epoch_losses.push_back(mean_loss);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    metrics.precision(9);
    metrics << (epoch + 1) << "," << mean_loss << "," << wall << "\n";
    metrics.flush();

    meta.step = state.step;
    meta.epochs_done = epoch + 1;
    if (config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0 &&
        epoch + 1 != config.epochs) {
      char name[64];
      std::snprintf(name, sizeof(name), "/checkpoint-%05llu.ckpt",
                    static_cast<unsigned long long>(epoch + 1));
      save_checkpoint(out_dir + name, state.online, state.target, state.optimizer, meta);
    }
  }

  meta.step = state.step;
  meta.epochs_done = config.epochs;
  save_checkpoint(final_path, state.online, state.target, state.optimizer, meta);
  result.checkpoint_path = final_path;
  return result;
}

}  // namespace contrawr
