#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "contrawr/pipeline.hpp"

namespace contrawr {

inline const std::vector<std::string>& compare_variants() {
  static const std::vector<std::string> variants = {"untrained", "nce", "contrawr",
                                                    "contrawr_plus"};
  return variants;
}

struct VariantSummary {
  std::string variant;
  std::vector<double> accuracies;
  double wall_seconds = 0.0;  // mean per run

  double mean() const {
    double total = 0.0;
    for (double a : accuracies) total += a;
    return accuracies.empty() ? 0.0 : total / static_cast<double>(accuracies.size());
  }
  double stddev() const {
    if (accuracies.size() < 2) return 0.0;
    const double m = mean();
    double sq = 0.0;
    for (double a : accuracies) sq += (a - m) * (a - m);
    return std::sqrt(sq / static_cast<double>(accuracies.size() - 1));
  }
};

// Full comparison: every variant runs the identical data/split/probe
// pipeline over compare.seeds consecutive seeds starting at train.seed.
inline std::vector<VariantSummary> run_comparison(const RunConfig& config,
                                                  const std::string& workdir,
                                                  std::ostream& log) {
  const std::uint64_t base_seed = config.get_u64("train.seed");
  const std::uint64_t seeds = config.get_u64("compare.seeds");
  if (seeds < 1) throw config_error("compare: compare.seeds must be at least 1");

  std::vector<VariantSummary> table;
  for (const std::string& variant : compare_variants()) {
    VariantSummary summary;
    summary.variant = variant;
    double wall = 0.0;
    for (std::uint64_t s = 0; s < seeds; ++s) {
      const std::uint64_t seed = base_seed + s;
      const std::string cell_dir = workdir + "/" + variant + "-seed" + std::to_string(seed);
      CellResult cell = run_cell(config, variant, seed, cell_dir);
      summary.accuracies.push_back(cell.accuracy);
      wall += cell.wall_seconds;
      log << "  " << variant << " seed " << seed << ": accuracy "
          << static_cast<int>(cell.accuracy * 1000) / 10.0 << "% in " << cell.wall_seconds
          << " s\n";
      log.flush();
    }
    summary.wall_seconds = wall / static_cast<double>(seeds);
    table.push_back(std::move(summary));
  }
  return table;
}

inline std::string comparison_markdown(const std::vector<VariantSummary>& table) {
  std::string out;
  out += "| method | accuracy (mean +/- std) | wall s/run |\n";
  out += "|---|---|---|\n";
  char line[160];
  for (const VariantSummary& row : table) {
    std::snprintf(line, sizeof(line), "| %s | %.2f +/- %.2f | %.1f |\n", row.variant.c_str(),
                  100.0 * row.mean(), 100.0 * row.stddev(), row.wall_seconds);
    out += line;
  }
  return out;
}

// Per-axis hyperparameter sweeps (others held at their defaults), run with
// the contrawr_plus objective.
struct AblationCell {
  std::string axis;
  double value = 0.0;
  double accuracy = 0.0;
};

inline const std::map<std::string, std::vector<double>>& ablation_axes() {
  static const std::map<std::string, std::vector<double>> axes = {
      {"sigma", {0.5, 2.0, 10.0}},
      {"temperature", {0.5, 2.0, 10.0}},
      {"delta", {0.1, 0.2, 0.3, 0.39}},  // includes the margin-bound region
      {"batch", {16, 64, 256}},
  };
  return axes;
}

inline std::vector<AblationCell> run_ablation(const RunConfig& base, const std::string& axis,
                                              const std::string& workdir, std::ostream& log) {
  const auto& axes = ablation_axes();
  std::vector<std::string> selected;
  if (axis == "all") {
    for (const auto& [name, values] : axes) selected.push_back(name);
  } else if (axes.count(axis)) {
    selected.push_back(axis);
  } else {
    throw config_error("compare: unknown ablation axis '" + axis + "'");
  }

  std::vector<AblationCell> cells;
  for (const std::string& name : selected) {
    for (double value : axes.at(name)) {
      RunConfig config = base;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%g", value);
      if (name == "sigma") {
        config.set("loss.sigma", buf);
      } else if (name == "temperature") {
        config.set("loss.temperature", buf);
      } else if (name == "delta") {
        config.set("loss.delta", buf);
      } else {
        config.set("train.batch_size", buf);
      }
      const std::string cell_dir = workdir + "/ablate-" + name + "-" + buf;
      CellResult cell =
          run_cell(config, "contrawr_plus", config.get_u64("train.seed"), cell_dir);
      cells.push_back({name, value, cell.accuracy});
      log << "  ablate " << name << " = " << value << ": accuracy "
          << static_cast<int>(cell.accuracy * 1000) / 10.0 << "%\n";
      log.flush();
    }
  }
  return cells;
}

inline std::string ablation_markdown(const std::vector<AblationCell>& cells) {
  std::string out;
  out += "| axis | value | accuracy |\n";
  out += "|---|---|---|\n";
  char line[96];
  for (const AblationCell& cell : cells) {
    std::snprintf(line, sizeof(line), "| %s | %g | %.2f |\n", cell.axis.c_str(), cell.value,
                  100.0 * cell.accuracy);
    out += line;
  }
  return out;
}

}  // namespace contrawr
