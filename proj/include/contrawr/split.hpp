#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "contrawr/epoch.hpp"
#include "contrawr/rng.hpp"

namespace contrawr {

// Subject-level random partition into pretext/training/test. Epochs never
// straddle groups; pretext labels are stripped on the way in.
inline Split split_subjects(const Dataset& dataset,
                            const std::array<double, 3>& ratios, std::uint64_t seed) {
  double sum = 0.0;
  for (double r : ratios) {
    if (r < 0.0) throw parameter_error("split: ratios must be nonnegative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw parameter_error("split: ratios must sum to 1");

  std::size_t nonempty = 0;
  for (double r : ratios) nonempty += (r > 0.0) ? 1 : 0;
  if (nonempty == 0) throw parameter_error("split: at least one ratio must be positive");
  if (dataset.subjects.size() < nonempty) {
    throw split_error("split: " + std::to_string(dataset.subjects.size()) +
                      " subjects cannot fill " + std::to_string(nonempty) + " groups");
  }

  // std::set iteration is sorted, so the shuffle below is the only source
  // of randomness in the assignment.
  std::vector<std::string> subjects(dataset.subjects.begin(), dataset.subjects.end());
  Rng rng = make_rng(derive_seed(seed, 0x511f7));
  shuffle(subjects, rng);

  // Largest-remainder apportionment, then guarantee every positive-ratio
  // group at least one subject by stealing from the largest group.
  const std::size_t n = subjects.size();
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (int g = 0; g < 3; ++g) {
    double exact = ratios[g] * static_cast<double>(n);
    counts[g] = static_cast<std::size_t>(std::floor(exact));
    remainder[g] = exact - std::floor(exact);
    assigned += counts[g];
  }
  while (assigned < n) {
    int best = 0;
    for (int g = 1; g < 3; ++g) {
      if (remainder[g] > remainder[best]) best = g;
    }
    ++counts[best];
    remainder[best] = -1.0;
    ++assigned;
  }
  for (int g = 0; g < 3; ++g) {
    if (ratios[g] > 0.0 && counts[g] == 0) {
      int donor = 0;
      for (int h = 1; h < 3; ++h) {
        if (counts[h] > counts[donor]) donor = h;
      }
      if (counts[donor] <= 1) throw split_error("split: not enough subjects to fill all groups");
      --counts[donor];
      ++counts[g];
    }
  }

  std::array<std::set<std::string>, 3> groups;
  std::size_t cursor = 0;
  for (int g = 0; g < 3; ++g) {
    for (std::size_t i = 0; i < counts[g]; ++i) groups[g].insert(subjects[cursor++]);
  }

  Split split;
  Dataset* out[3] = {&split.pretext, &split.training, &split.test};
  for (int g = 0; g < 3; ++g) {
    out[g]->subjects = groups[g];
    out[g]->clip_bound = dataset.clip_bound;
  }
  for (const Epoch& e : dataset.epochs) {
    for (int g = 0; g < 3; ++g) {
      if (groups[g].find(e.subject_id) != groups[g].end()) {
        out[g]->epochs.push_back(e);
        if (g == 0) out[g]->epochs.back().label.reset();  // pretext is label-free
        break;
      }
    }
  }
  return split;
}

}  // namespace contrawr
