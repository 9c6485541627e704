#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <string>
#include <vector>

#include "contrawr/epoch.hpp"
#include "contrawr/errors.hpp"
#include "contrawr/model.hpp"
#include "contrawr/stft.hpp"

namespace contrawr {

// Frozen-encoder embeddings with their stage labels; the linear probe's
// training matter.
struct EmbeddingSet {
  std::vector<std::vector<double>> embeddings;  // n x d
  std::vector<Stage> labels;
  std::vector<std::string> subject_ids;

  std::size_t size() const { return embeddings.size(); }
  std::size_t dim() const { return embeddings.empty() ? 0 : embeddings.front().size(); }
};

// Encoder latents h (no projector: probing evaluates f, the projector is a
// pretext-only head). Deterministic; the encoder is read in eval mode only.
inline EmbeddingSet embed(Encoder<float>& encoder, const std::vector<Epoch>& epochs,
                          const StftConfig& stft, std::size_t batch_size = 64) {
  EmbeddingSet set;
  for (std::size_t at = 0; at < epochs.size(); at += batch_size) {
    const std::size_t take = std::min(batch_size, epochs.size() - at);
    std::vector<FeatureTensor> features(take);
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < take; ++i) {
      features[i] = epoch_to_features(epochs[at + i], stft);
    }
    std::vector<const FeatureTensor*> batch;
    for (const auto& f : features) batch.push_back(&f);

    GraphBinding<float> bind;
    auto latent = encoder.forward(features_to_leaf<float>(batch), ForwardMode::eval, bind);
    const std::size_t dim = latent->shape[1];
    for (std::size_t i = 0; i < take; ++i) {
      const Epoch& e = epochs[at + i];
      if (!e.label) throw degenerate_data_error("embed: epoch without a stage label");
      std::vector<double> row(dim);
      for (std::size_t j = 0; j < dim; ++j) {
        row[j] = static_cast<double>(latent->val[i * dim + j]);
      }
      set.embeddings.push_back(std::move(row));
      set.labels.push_back(*e.label);
      set.subject_ids.push_back(e.subject_id);
    }
  }
  return set;
}

// Per-dimension affine standardization fitted on the training set and
// applied to everything the probe touches.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> inv_std;

  static Standardizer fit(const EmbeddingSet& set) {
    Standardizer s;
    const std::size_t n = set.size(), d = set.dim();
    if (n == 0) throw degenerate_data_error("standardizer: empty set");
    s.mean.assign(d, 0.0);
    s.inv_std.assign(d, 1.0);
    for (const auto& row : set.embeddings) {
      for (std::size_t j = 0; j < d; ++j) s.mean[j] += row[j];
    }
    for (double& m : s.mean) m /= static_cast<double>(n);
    std::vector<double> var(d, 0.0);
    for (const auto& row : set.embeddings) {
      for (std::size_t j = 0; j < d; ++j) {
        var[j] += (row[j] - s.mean[j]) * (row[j] - s.mean[j]);
      }
    }
    for (std::size_t j = 0; j < d; ++j) {
      const double sd = std::sqrt(var[j] / static_cast<double>(n));
      s.inv_std[j] = sd > 1e-12 ? 1.0 / sd : 1.0;
    }
    return s;
  }

  EmbeddingSet apply(const EmbeddingSet& set) const {
    EmbeddingSet out = set;
    for (auto& row : out.embeddings) {
      for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mean[j]) * inv_std[j];
    }
    return out;
  }
};

// Multinomial logistic regression over the five stages.
struct ProbeModel {
  std::vector<std::vector<double>> weights;  // 5 x d
  std::array<double, kNumStages> biases{};
  std::size_t iterations = 0;
  double final_objective = 0.0;
  bool converged = false;

  std::array<double, kNumStages> predict_proba(const std::vector<double>& x) const {
    std::array<double, kNumStages> logits{};
    for (int k = 0; k < kNumStages; ++k) {
      double acc = biases[k];
      for (std::size_t j = 0; j < x.size(); ++j) acc += weights[k][j] * x[j];
      logits[k] = acc;
    }
    double hi = logits[0];
    for (double l : logits) hi = std::max(hi, l);
    double total = 0.0;
    std::array<double, kNumStages> proba{};
    for (int k = 0; k < kNumStages; ++k) {
      proba[k] = std::exp(logits[k] - hi);
      total += proba[k];
    }
    for (double& p : proba) p /= total;
    return proba;
  }

  Stage predict(const std::vector<double>& x) const {
    const auto proba = predict_proba(x);
    int best = 0;
    for (int k = 1; k < kNumStages; ++k) {
      if (proba[k] > proba[best]) best = k;
    }
    return static_cast<Stage>(best);
  }
};

namespace probe_detail {

// Summed cross-entropy plus l2/2 * ||W||^2 (biases unregularized), with the
// gradient when requested. Matches the sklearn-style summed formulation.
inline double objective(const EmbeddingSet& set, const std::vector<double>& flat, double l2,
                        std::vector<double>* grad) {
  const std::size_t d = set.dim();
  const std::size_t wsize = kNumStages * d;
  if (grad) grad->assign(flat.size(), 0.0);
  double obj = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& x = set.embeddings[i];
    std::array<double, kNumStages> logits{};
    for (int k = 0; k < kNumStages; ++k) {
      double acc = flat[wsize + k];
      const double* w = flat.data() + k * d;
      for (std::size_t j = 0; j < d; ++j) acc += w[j] * x[j];
      logits[k] = acc;
    }
    double hi = logits[0];
    for (double l : logits) hi = std::max(hi, l);
    double total = 0.0;
    std::array<double, kNumStages> p{};
    for (int k = 0; k < kNumStages; ++k) {
      p[k] = std::exp(logits[k] - hi);
      total += p[k];
    }
    const int y = static_cast<int>(set.labels[i]);
    obj += hi + std::log(total) - logits[y];
    if (grad) {
      for (int k = 0; k < kNumStages; ++k) {
        const double delta = p[k] / total - (k == y ? 1.0 : 0.0);
        double* gw = grad->data() + k * d;
        for (std::size_t j = 0; j < d; ++j) gw[j] += delta * x[j];
        (*grad)[wsize + k] += delta;
      }
    }
  }
  for (std::size_t idx = 0; idx < wsize; ++idx) {
    obj += 0.5 * l2 * flat[idx] * flat[idx];
    if (grad) (*grad)[idx] += l2 * flat[idx];
  }
  return obj;
}

}  // namespace probe_detail

// Full-batch gradient descent with Armijo backtracking, so the recorded
// objective trace is monotone nonincreasing by construction.
inline ProbeModel fit_logistic(const EmbeddingSet& set, std::size_t max_iter = 500,
                               double l2 = 1.0, std::vector<double>* objective_trace = nullptr) {
  if (set.size() < 10) throw degenerate_data_error("fit_logistic: needs at least 10 samples");
  std::array<bool, kNumStages> present{};
  std::size_t classes = 0;
  for (Stage label : set.labels) {
    if (!present[static_cast<int>(label)]) {
      present[static_cast<int>(label)] = true;
      ++classes;
    }
  }
  if (classes < 2) throw degenerate_data_error("fit_logistic: single-class training set");

  const std::size_t d = set.dim();
  std::vector<double> point(kNumStages * d + kNumStages, 0.0);
  std::vector<double> grad;
  double obj = probe_detail::objective(set, point, l2, &grad);
  if (objective_trace) objective_trace->push_back(obj);

  double step = 1.0 / static_cast<double>(set.size());
  std::size_t iter = 0;
  bool converged = false;
  for (; iter < max_iter; ++iter) {
    double gnorm_sq = 0.0;
    for (double g : grad) gnorm_sq += g * g;
    if (std::sqrt(gnorm_sq) < 1e-7 * static_cast<double>(set.size())) {
      converged = true;
      break;
    }
    // Backtracking from a slightly optimistic step; never accept an
    // increase (Armijo with c = 1e-4).
    step *= 2.0;
    std::vector<double> trial(point.size());
    double trial_obj = obj;
    bool accepted = false;
    for (int tries = 0; tries < 60; ++tries) {
      for (std::size_t j = 0; j < point.size(); ++j) trial[j] = point[j] - step * grad[j];
      trial_obj = probe_detail::objective(set, trial, l2, nullptr);
      if (trial_obj <= obj - 1e-4 * step * gnorm_sq) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      converged = true;  // no descent direction progress at machine scale
      break;
    }
    point.swap(trial);
    obj = probe_detail::objective(set, point, l2, &grad);
    if (objective_trace) objective_trace->push_back(obj);
  }

  ProbeModel model;
  model.weights.assign(kNumStages, std::vector<double>(d));
  for (int k = 0; k < kNumStages; ++k) {
    std::copy(point.begin() + k * d, point.begin() + (k + 1) * d, model.weights[k].begin());
    model.biases[k] = point[kNumStages * d + k];
  }
  model.iterations = iter;
  model.final_objective = obj;
  model.converged = converged;
  return model;
}

struct Evaluation {
  double accuracy = 0.0;
  std::array<std::array<std::size_t, kNumStages>, kNumStages> confusion{};  // [true][pred]
};

inline Evaluation evaluate(const ProbeModel& model, const EmbeddingSet& set) {
  if (set.size() == 0) throw degenerate_data_error("evaluate: empty set");
  Evaluation eval;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const Stage predicted = model.predict(set.embeddings[i]);
    const Stage truth = set.labels[i];
    ++eval.confusion[static_cast<int>(truth)][static_cast<int>(predicted)];
    if (predicted == truth) ++hits;
  }
  eval.accuracy = static_cast<double>(hits) / static_cast<double>(set.size());
  return eval;
}

// CSV export: subject_id,label,e_0..e_{d-1} at 9 significant digits.
inline void export_embeddings(const EmbeddingSet& set, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw data_error("export_embeddings: cannot open " + path);
  out << "subject_id,label";
  for (std::size_t j = 0; j < set.dim(); ++j) out << ",e_" << j;
  out << "\n";
  out.precision(12);  // comfortably lossless at the promised 9 significant digits
  for (std::size_t i = 0; i < set.size(); ++i) {
    out << set.subject_ids[i] << "," << stage_name(set.labels[i]);
    for (double v : set.embeddings[i]) out << "," << v;
    out << "\n";
  }
  if (!out) throw data_error("export_embeddings: write failed for " + path);
}

inline EmbeddingSet import_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("import_embeddings: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw format_error("import_embeddings: empty file " + path);
  EmbeddingSet set;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<double> values;
    std::string subject, label;
    std::size_t start = 0, field = 0;
    while (start <= line.size()) {
      std::size_t end = line.find(',', start);
      if (end == std::string::npos) end = line.size();
      const std::string cell = line.substr(start, end - start);
      if (field == 0) {
        subject = cell;
      } else if (field == 1) {
        label = cell;
      } else {
        values.push_back(std::stod(cell));
      }
      ++field;
      start = end + 1;
    }
    auto stage = stage_from_name(label);
    if (!stage) {
      throw format_error("import_embeddings: bad label '" + label + "' at row " +
                         std::to_string(row));
    }
    set.subject_ids.push_back(subject);
    set.labels.push_back(*stage);
    set.embeddings.push_back(std::move(values));
  }
  return set;
}

}  // namespace contrawr
