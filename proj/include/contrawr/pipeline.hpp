#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "contrawr/config.hpp"
#include "contrawr/epoch_io.hpp"
#include "contrawr/probe.hpp"
#include "contrawr/split.hpp"
#include "contrawr/synthetic.hpp"
#include "contrawr/training.hpp"

namespace contrawr {

// ---------------------------------------------------------------------------
// Dataset directories: one EPOC1 file per epoch plus a manifest CSV
// (file,subject_id,label) so a directory is self-describing.

inline void write_dataset_dir(const Dataset& dataset, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir + "/manifest.csv");
  if (!manifest) throw data_error("synth: cannot write manifest in " + dir);
  manifest << "file,subject_id,label\n";
  std::size_t index = 0;
  for (const Epoch& epoch : dataset.epochs) {
    char name[32];
    std::snprintf(name, sizeof(name), "epoch-%06zu.epoc1", index++);
    save_epoch_epoc1(epoch, dir + "/" + name);
    manifest << name << "," << epoch.subject_id << ","
             << (epoch.label ? stage_name(*epoch.label) : "-") << "\n";
  }
  if (!manifest) throw data_error("synth: manifest write failed in " + dir);
}

inline Dataset load_dataset_dir(const std::string& dir, float clip_bound) {
  const std::string manifest_path = dir + "/manifest.csv";
  std::ifstream manifest(manifest_path);
  if (!manifest) throw data_error("dataset: cannot open " + manifest_path);
  std::string line;
  if (!std::getline(manifest, line) || line != "file,subject_id,label") {
    throw format_error("dataset: bad manifest header in " + manifest_path);
  }
  Dataset dataset;
  dataset.clip_bound = clip_bound;
  std::size_t row = 0;
  while (std::getline(manifest, line)) {
    ++row;
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw format_error("dataset: bad manifest row " + std::to_string(row) + " in " +
                         manifest_path);
    }
    Epoch epoch = load_epoch_epoc1(dir + "/" + line.substr(0, c1));
    dataset.epochs.push_back(std::move(epoch));
    dataset.subjects.insert(dataset.epochs.back().subject_id);
  }
  validate_dataset(dataset);
  return dataset;
}

// Re-reads every file in the manifest, surfacing the first corrupt one.
inline void verify_dataset_dir(const std::string& dir) {
  load_dataset_dir(dir, 1.0f);
}

// ---------------------------------------------------------------------------
// Probe wiring shared by the CLI and the comparison harness

struct ProbeOutcome {
  Evaluation eval;
  ProbeModel model;
  EmbeddingSet train_embeddings;  // standardized when the config says so
  EmbeddingSet test_embeddings;
  EmbeddingSet test_raw;  // pre-standardization latents, what exports want
};

inline ProbeOutcome run_probe(Encoder<float>& encoder, const Split& split,
                              const RunConfig& config) {
  if (split.training.epochs.empty() || split.test.epochs.empty()) {
    throw degenerate_data_error("probe: training and test groups must be nonempty");
  }
  const StftConfig stft = stft_config_from(config);
  ProbeOutcome out;
  out.train_embeddings = embed(encoder, split.training.epochs, stft);
  out.test_raw = embed(encoder, split.test.epochs, stft);
  out.test_embeddings = out.test_raw;
  if (config.get_bool("probe.standardize")) {
    const auto standardizer = Standardizer::fit(out.train_embeddings);
    out.train_embeddings = standardizer.apply(out.train_embeddings);
    out.test_embeddings = standardizer.apply(out.test_embeddings);
  }
  out.model = fit_logistic(out.train_embeddings, config.get_u64("probe.max_iter"),
                           config.get_double("probe.l2"));
  out.eval = evaluate(out.model, out.test_embeddings);
  return out;
}

// Subject split reused by pretext and probe: both derive it from the same
// master seed, so the two commands always agree on group membership.
inline Split split_for(const Dataset& dataset, const RunConfig& config) {
  return split_subjects(dataset, split_ratios_from(config),
                        derive_seed(config.get_u64("train.seed"), 0x571e));
}

// A checkpoint is only probe-compatible when the feature extraction and
// model geometry it was trained under match the current configuration.
inline void check_probe_compatibility(const RunConfig& current, const RunConfig& snapshot) {
  for (const char* key : {"stft.window", "stft.hop", "stft.log_amplitude", "model.widths",
                          "model.pool_bins", "model.pool_frames", "model.projection_dim"}) {
    if (current.get(key) != snapshot.get(key)) {
      throw config_error("probe: checkpoint/config mismatch on " + std::string(key) +
                         " (checkpoint '" + snapshot.get(key) + "', current '" +
                         current.get(key) + "')");
    }
  }
}

inline void write_probe_report(const ProbeOutcome& outcome, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw data_error("probe: cannot write report " + path);
  out.precision(9);
  out << "{\n";
  out << "  \"accuracy\": " << outcome.eval.accuracy << ",\n";
  out << "  \"iterations\": " << outcome.model.iterations << ",\n";
  out << "  \"converged\": " << (outcome.model.converged ? "true" : "false") << ",\n";
  out << "  \"per_class\": {\n";
  for (int k = 0; k < kNumStages; ++k) {
    std::size_t true_count = 0, predicted_count = 0, hit = outcome.eval.confusion[k][k];
    for (int j = 0; j < kNumStages; ++j) {
      true_count += outcome.eval.confusion[k][j];
      predicted_count += outcome.eval.confusion[j][k];
    }
    const double precision =
        predicted_count ? static_cast<double>(hit) / static_cast<double>(predicted_count) : 0.0;
    const double recall =
        true_count ? static_cast<double>(hit) / static_cast<double>(true_count) : 0.0;
    out << "    \"" << stage_name(static_cast<Stage>(k)) << "\": {\"precision\": " << precision
        << ", \"recall\": " << recall << ", \"support\": " << true_count << "}"
        << (k + 1 < kNumStages ? "," : "") << "\n";
  }
  out << "  },\n";
  out << "  \"confusion\": [\n";
  for (int t = 0; t < kNumStages; ++t) {
    out << "    [";
    for (int p = 0; p < kNumStages; ++p) {
      out << outcome.eval.confusion[t][p] << (p + 1 < kNumStages ? ", " : "");
    }
    out << "]" << (t + 1 < kNumStages ? "," : "") << "\n";
  }
  out << "  ]\n}\n";
}

// ---------------------------------------------------------------------------
// One comparison cell: synthetic data -> split -> (optional) pretext ->
// frozen-encoder probe. "untrained" skips the pretext phase, mirroring the
// Untrained Encoder baseline.

struct CellResult {
  std::string variant;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double wall_seconds = 0.0;
};

inline CellResult run_cell(RunConfig config, const std::string& variant, std::uint64_t seed,
                           const std::string& workdir) {
  const auto t0 = std::chrono::steady_clock::now();
  config.set("train.seed", std::to_string(seed));
  if (variant != "untrained") config.set("loss.variant", variant);

  // The same data and split serve every variant within a seed cell.
  Dataset dataset = generate_synthetic_dataset(
      config.get_u64("synth.n_subjects"), config.get_u64("synth.epochs_per_subject"),
      config.get_u64("synth.channels"), config.get_u64("synth.samples"),
      static_cast<float>(config.get_double("synth.sample_rate")), derive_seed(seed, 0xda7a));
  Split split = split_for(dataset, config);

  PretextConfig pretext = pretext_config_from(config);
  const Epoch& first = dataset.epochs.front();
  const EncoderConfig enc = encoder_config_for(pretext, first.n_channels, first.n_samples);
  const std::size_t projection_dim =
      pretext.projection_dim ? pretext.projection_dim : enc.latent_dim();

  DualNetworkState state(enc, projection_dim, pretext.ema_lambda,
                         derive_seed(pretext.seed, 0x0de1));
  if (variant != "untrained") {
    auto result = run_pretext(split, pretext, workdir);
    load_checkpoint(result.checkpoint_path, state.online, state.target, state.optimizer);
  }

  auto probe = run_probe(state.online.encoder, split, config);
  CellResult cell;
  cell.variant = variant;
  cell.seed = seed;
  cell.accuracy = probe.eval.accuracy;
  cell.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return cell;
}

}  // namespace contrawr
