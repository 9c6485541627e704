#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "contrawr/augment.hpp"
#include "contrawr/errors.hpp"
#include "contrawr/losses.hpp"
#include "contrawr/training.hpp"

namespace contrawr {

// Flat key-value configuration: "section.key = value" lines in files,
// "--section.key value" on the command line. Unknown keys are rejected by
// name; the full snapshot rides along in every checkpoint and report.
class RunConfig {
 public:
  RunConfig() : values_(defaults()) {}

  static const std::map<std::string, std::string>& defaults() {
    static const std::map<std::string, std::string> table = {
        {"synth.n_subjects", "20"},
        {"synth.epochs_per_subject", "50"},
        {"synth.channels", "2"},
        {"synth.samples", "3000"},
        {"synth.sample_rate", "100"},
        {"data.dir", ""},
        {"data.clip_bound", "50"},
        {"split.pretext", "0.6"},
        {"split.train", "0.2"},
        {"split.test", "0.2"},
        {"augment.enabled", "bandpass,noising,flipping,rotation"},
        {"augment.bands", "0.5:30"},
        {"augment.noise_degree", "0.05"},
        {"augment.flip_pairs", "0:1"},
        {"augment.clip_bound", "50"},
        {"stft.window", "256"},
        {"stft.hop", "64"},
        {"stft.log_amplitude", "false"},
        {"model.widths", "8,16,32,64"},
        {"model.pool_bins", "2"},
        {"model.pool_frames", "1"},
        {"model.projection_dim", "0"},
        {"loss.variant", "contrawr"},
        {"loss.sigma", "2"},
        {"loss.delta", "0.2"},
        {"loss.temperature", "2"},
        {"loss.include_self", "true"},
        {"train.epochs", "100"},
        {"train.batch_size", "256"},
        {"train.ema_lambda", "0.99"},
        {"train.lr", "2e-4"},
        {"train.weight_decay", "1e-4"},
        {"train.seed", "0"},
        {"train.checkpoint_every", "10"},
        {"probe.l2", "1"},
        {"probe.max_iter", "500"},
        {"probe.standardize", "true"},
        {"compare.seeds", "5"},
    };
    return table;
  }

  void set(const std::string& key, const std::string& value) {
    if (values_.find(key) == values_.end()) {
      throw config_error("config: unknown key '" + key + "'");
    }
    values_[key] = value;
  }

  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw config_error("config: unknown key '" + key + "'");
    return it->second;
  }

  double get_double(const std::string& key) const {
    try {
      std::size_t used = 0;
      const double v = std::stod(get(key), &used);
      if (used != get(key).size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::exception&) {
      throw config_error("config: key '" + key + "' wants a number, got '" + get(key) + "'");
    }
  }

  std::uint64_t get_u64(const std::string& key) const {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(get(key), &used);
      if (used != get(key).size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::exception&) {
      throw config_error("config: key '" + key + "' wants a nonnegative integer, got '" +
                         get(key) + "'");
    }
  }

  bool get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw config_error("config: key '" + key + "' wants true/false, got '" + v + "'");
  }

  std::vector<std::string> get_list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(get(key));
    std::string token;
    while (std::getline(ss, token, ',')) {
      const auto begin = token.find_first_not_of(" \t");
      if (begin == std::string::npos) continue;
      const auto end = token.find_last_not_of(" \t");
      out.push_back(token.substr(begin, end - begin + 1));
    }
    return out;
  }

  // "a:b" pairs, comma separated.
  std::vector<std::pair<double, double>> get_pairs(const std::string& key) const {
    std::vector<std::pair<double, double>> out;
    for (const std::string& token : get_list(key)) {
      const auto colon = token.find(':');
      if (colon == std::string::npos) {
        throw config_error("config: key '" + key + "' wants lo:hi pairs, got '" + token + "'");
      }
      try {
        out.emplace_back(std::stod(token.substr(0, colon)), std::stod(token.substr(colon + 1)));
      } catch (const std::exception&) {
        throw config_error("config: key '" + key + "' wants numeric pairs, got '" + token + "'");
      }
    }
    return out;
  }

  // Serialized snapshot: sorted "key = value" lines (std::map keeps order).
  std::string serialize() const {
    std::string out;
    for (const auto& [key, value] : values_) {
      out += key;
      out += " = ";
      out += value;
      out += "\n";
    }
    return out;
  }

  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("config: cannot open " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      parse_line(line, path + ":" + std::to_string(lineno));
    }
  }

  void load_text(const std::string& text) {
    std::stringstream ss(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
      ++lineno;
      parse_line(line, "line " + std::to_string(lineno));
    }
  }

 private:
  void parse_line(std::string line, const std::string& where) {
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.erase(comment);
    const auto begin = line.find_first_not_of(" \t");
    if (begin == std::string::npos) return;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw config_error("config: expected 'key = value' at " + where);
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t");
      return s.substr(b, e - b + 1);
    };
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }

  std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Typed views over the flat configuration

inline AugmentPolicy augment_policy_from(const RunConfig& config) {
  AugmentPolicy policy;
  policy.enabled.clear();
  for (const std::string& name : config.get_list("augment.enabled")) {
    if (name == "bandpass") {
      policy.enabled.insert(AugmentKind::bandpass);
    } else if (name == "noising") {
      policy.enabled.insert(AugmentKind::noising);
    } else if (name == "flipping") {
      policy.enabled.insert(AugmentKind::flipping);
    } else if (name == "rotation") {
      policy.enabled.insert(AugmentKind::rotation);
    } else {
      throw config_error("config: unknown augmentation '" + name + "'");
    }
  }
  policy.bandpass_bands = config.get_pairs("augment.bands");
  policy.noise_degree = config.get_double("augment.noise_degree");
  policy.flip_pairs.clear();
  for (const auto& [a, b] : config.get_pairs("augment.flip_pairs")) {
    policy.flip_pairs.emplace_back(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
  }
  policy.clip_bound = static_cast<float>(config.get_double("augment.clip_bound"));
  return policy;
}

inline LossConfig loss_config_from(const RunConfig& config) {
  LossConfig loss;
  const std::string variant = config.get("loss.variant");
  if (variant == "contrawr") {
    loss.variant = LossVariant::contrawr;
  } else if (variant == "contrawr_plus") {
    loss.variant = LossVariant::contrawr_plus;
  } else if (variant == "nce") {
    loss.variant = LossVariant::nce;
  } else {
    throw config_error("config: unknown loss.variant '" + variant + "'");
  }
  loss.sigma = config.get_double("loss.sigma");
  loss.delta = config.get_double("loss.delta");
  loss.temperature = config.get_double("loss.temperature");
  loss.include_self = config.get_bool("loss.include_self");
  return loss;
}

inline StftConfig stft_config_from(const RunConfig& config) {
  StftConfig stft;
  stft.window = config.get_u64("stft.window");
  stft.hop = config.get_u64("stft.hop");
  stft.log_amplitude = config.get_bool("stft.log_amplitude");
  return stft;
}

inline PretextConfig pretext_config_from(const RunConfig& config) {
  PretextConfig pretext;
  pretext.epochs = config.get_u64("train.epochs");
  pretext.batch_size = config.get_u64("train.batch_size");
  pretext.ema_lambda = config.get_double("train.ema_lambda");
  pretext.adam.learning_rate = config.get_double("train.lr");
  pretext.adam.weight_decay = config.get_double("train.weight_decay");
  pretext.loss = loss_config_from(config);
  pretext.augment = augment_policy_from(config);
  pretext.stft = stft_config_from(config);
  pretext.encoder_widths.clear();
  for (const std::string& w : config.get_list("model.widths")) {
    pretext.encoder_widths.push_back(static_cast<std::size_t>(std::stoull(w)));
  }
  pretext.pool_bins = config.get_u64("model.pool_bins");
  pretext.pool_frames = config.get_u64("model.pool_frames");
  pretext.projection_dim = config.get_u64("model.projection_dim");
  pretext.seed = config.get_u64("train.seed");
  pretext.checkpoint_every = config.get_u64("train.checkpoint_every");
  pretext.config_snapshot = config.serialize();
  return pretext;
}

inline std::array<double, 3> split_ratios_from(const RunConfig& config) {
  return {config.get_double("split.pretext"), config.get_double("split.train"),
          config.get_double("split.test")};
}

}  // namespace contrawr
