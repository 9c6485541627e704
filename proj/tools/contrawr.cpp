// Command-line front end for the ContraWR pipeline: synthetic data
// generation, pretext training, frozen-encoder probing, augmentation demos,
// and the variant comparison table.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "contrawr/compare.hpp"
#include "contrawr/config.hpp"
#include "contrawr/pipeline.hpp"

namespace {

using namespace contrawr;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path);
  out << text;
}

// Remaining tokens are treated as "--section.key value" overrides.
void apply_overrides(RunConfig& config, const std::vector<std::string>& extras) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& token = extras[i];
    if (token.rfind("--", 0) != 0 || token.find('.') == std::string::npos) {
      throw config_error("unrecognized argument '" + token +
                         "' (config overrides look like --section.key value)");
    }
    std::string key = token.substr(2);
    std::string value;
    const auto eq = key.find('=');
    if (eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (i + 1 >= extras.size()) throw config_error("override '" + token + "' wants a value");
      value = extras[++i];
    }
    config.set(key, value);
  }
}

Dataset dataset_from_config(const RunConfig& config) {
  const std::string dir = config.get("data.dir");
  if (dir.empty()) {
    throw config_error("data.dir is not set (point it at a dataset directory from 'synth')");
  }
  return load_dataset_dir(dir, static_cast<float>(config.get_double("data.clip_bound")));
}

int cmd_synth(const RunConfig& config, const std::string& out_dir, bool verify) {
  Dataset dataset = generate_synthetic_dataset(
      config.get_u64("synth.n_subjects"), config.get_u64("synth.epochs_per_subject"),
      config.get_u64("synth.channels"), config.get_u64("synth.samples"),
      static_cast<float>(config.get_double("synth.sample_rate")),
      config.get_u64("train.seed"));
  write_dataset_dir(dataset, out_dir);
  write_text(out_dir + "/config.ini", config.serialize());
  if (verify) verify_dataset_dir(out_dir);
  std::cout << "wrote " << dataset.epochs.size() << " epochs from " << dataset.subjects.size()
            << " subjects to " << out_dir << (verify ? " (verified)" : "") << "\n";
  return 0;
}

int cmd_pretext(const RunConfig& config, const std::string& out_dir,
                const std::string& resume) {
  Dataset dataset = dataset_from_config(config);
  Split split = split_for(dataset, config);
  std::cout << "pretext " << split.pretext.epochs.size() << " epochs / training "
            << split.training.epochs.size() << " / test " << split.test.epochs.size() << "\n";
  PretextConfig pretext = pretext_config_from(config);
  auto result = run_pretext(split, pretext, out_dir, resume);
  std::cout << "checkpoint: " << result.checkpoint_path << "\n"
            << "metrics:    " << result.metrics_path << "\n";
  if (!result.epoch_losses.empty()) {
    std::cout << "final epoch mean loss " << result.epoch_losses.back() << "\n";
  }
  return 0;
}

int cmd_probe(const RunConfig& config, const std::string& out_dir,
              const std::string& checkpoint, bool untrained, const std::string& export_path) {
  Dataset dataset = dataset_from_config(config);
  Split split = split_for(dataset, config);

  PretextConfig pretext = pretext_config_from(config);
  const Epoch& first = dataset.epochs.front();
  const EncoderConfig enc = encoder_config_for(pretext, first.n_channels, first.n_samples);
  const std::size_t projection_dim =
      pretext.projection_dim ? pretext.projection_dim : enc.latent_dim();
  DualNetworkState state(enc, projection_dim, pretext.ema_lambda,
                         derive_seed(pretext.seed, 0x0de1));

  if (untrained) {
    std::cout << "probing a freshly initialized encoder (untrained baseline)\n";
  } else {
    if (checkpoint.empty()) throw config_error("probe: pass a checkpoint or --untrained");
    RunConfig snapshot;
    snapshot.load_text(read_checkpoint_config(checkpoint));
    check_probe_compatibility(config, snapshot);
    load_checkpoint(checkpoint, state.online, state.target, state.optimizer);
    std::cout << "probing " << checkpoint << "\n";
  }

  auto outcome = run_probe(state.online.encoder, split, config);
  std::filesystem::create_directories(out_dir);
  const std::string report_path = out_dir + "/probe_report.json";
  write_probe_report(outcome, report_path);
  write_text(out_dir + "/config.ini", config.serialize());
  std::cout << "test accuracy " << outcome.eval.accuracy << " ("
            << outcome.model.iterations << " probe iterations)\n"
            << "report: " << report_path << "\n";
  if (!export_path.empty()) {
    export_embeddings(outcome.test_raw, export_path);
    std::cout << "embeddings: " << export_path << "\n";
  }
  return 0;
}

int cmd_augment_demo(const RunConfig& config, const std::string& out_dir) {
  Dataset dataset;
  if (!config.get("data.dir").empty()) {
    dataset = dataset_from_config(config);
  } else {
    dataset = generate_synthetic_dataset(3, 1, config.get_u64("synth.channels"),
                                         config.get_u64("synth.samples"),
                                         static_cast<float>(config.get_double("synth.sample_rate")),
                                         config.get_u64("train.seed"));
  }
  const Epoch& epoch = dataset.epochs.front();
  AugmentPolicy policy = augment_policy_from(config);
  std::filesystem::create_directories(out_dir);
  Rng rng = make_rng(derive_seed(config.get_u64("train.seed"), 0xde30));

  save_epoch_epoc1(epoch, out_dir + "/before.epoc1");
  const auto& band = policy.bandpass_bands.front();
  save_epoch_epoc1(bandpass(epoch, band.first, band.second), out_dir + "/after-bandpass.epoc1");
  save_epoch_epoc1(add_noise(epoch, policy.noise_degree, NoiseMode::high, rng),
                   out_dir + "/after-noising-high.epoc1");
  save_epoch_epoc1(add_noise(epoch, policy.noise_degree, NoiseMode::low, rng),
                   out_dir + "/after-noising-low.epoc1");
  if (epoch.n_channels >= 2) {
    save_epoch_epoc1(flip_channels(epoch, policy.flip_pairs), out_dir + "/after-flipping.epoc1");
  }
  save_epoch_epoc1(rotate(epoch, epoch.n_samples / 3), out_dir + "/after-rotation.epoc1");
  save_epoch_epoc1(random_augment(epoch, policy, rng), out_dir + "/after-random.epoc1");
  std::cout << "wrote before/after pairs to " << out_dir << "\n";
  return 0;
}

int cmd_compare(const RunConfig& config, const std::string& out_dir,
                const std::string& ablate) {
  std::filesystem::create_directories(out_dir);
  write_text(out_dir + "/config.ini", config.serialize());

  auto table = run_comparison(config, out_dir, std::cout);
  std::string markdown = "# Probe accuracy by pretext objective\n\n";
  markdown += comparison_markdown(table);
  if (!ablate.empty()) {
    auto cells = run_ablation(config, ablate, out_dir, std::cout);
    markdown += "\n# Hyperparameter ablation (contrawr_plus)\n\n";
    markdown += ablation_markdown(cells);
  }
  write_text(out_dir + "/compare.md", markdown);
  std::cout << "\n" << markdown << "\ntable: " << out_dir << "/compare.md\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ContraWR: self-supervised EEG representation learning toolkit"};
  app.require_subcommand(1);
  app.allow_extras();

  std::string config_path, out_dir = "out";
  std::uint64_t seed = 0;
  auto* config_opt = app.add_option("--config", config_path, "INI-style configuration file");
  auto* seed_opt = app.add_option("--seed", seed, "master seed (shorthand for train.seed)");
  app.add_option("--out", out_dir, "output directory");

  auto* synth = app.add_subcommand("synth", "generate a synthetic EPOC1 dataset directory");
  bool verify = false;
  synth->add_flag("--verify", verify, "re-read every written file and check invariants");
  synth->allow_extras();
  synth->fallthrough();

  auto* pretext = app.add_subcommand("pretext", "run self-supervised pretext training");
  std::string resume;
  pretext->add_option("--resume", resume, "checkpoint to resume from");
  pretext->allow_extras();
  pretext->fallthrough();

  auto* probe = app.add_subcommand("probe", "fit and evaluate the frozen-encoder linear probe");
  std::string checkpoint, export_path;
  bool untrained = false;
  probe->add_option("--checkpoint", checkpoint, "checkpoint produced by 'pretext'");
  probe->add_flag("--untrained", untrained, "probe a freshly initialized encoder instead");
  probe->add_option("--export-embeddings", export_path, "write test embeddings as CSV");
  probe->allow_extras();
  probe->fallthrough();

  auto* augment_demo =
      app.add_subcommand("augment-demo", "write before/after EPOC1 pairs per augmentation");
  augment_demo->allow_extras();
  augment_demo->fallthrough();

  auto* compare = app.add_subcommand("compare", "probe-accuracy table across pretext variants");
  std::string ablate;
  auto* ablate_opt =
      compare->add_option("--ablate", ablate, "sweep sigma|temperature|delta|batch (default all)")
          ->expected(0, 1);
  compare->allow_extras();
  compare->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig config;
    if (config_opt->count()) config.load_file(config_path);
    apply_overrides(config, app.remaining(true));
    if (seed_opt->count()) config.set("train.seed", std::to_string(seed));

    if (synth->parsed()) return cmd_synth(config, out_dir, verify);
    if (pretext->parsed()) return cmd_pretext(config, out_dir, resume);
    if (probe->parsed()) return cmd_probe(config, out_dir, checkpoint, untrained, export_path);
    if (augment_demo->parsed()) return cmd_augment_demo(config, out_dir);
    if (compare->parsed()) {
      if (ablate_opt->count() && ablate.empty()) ablate = "all";
      return cmd_compare(config, out_dir, ablate);
    }
    throw config_error("no subcommand selected");
  } catch (const numeric_error& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const parameter_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
