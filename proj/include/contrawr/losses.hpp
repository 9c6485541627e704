#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "contrawr/autodiff.hpp"
#include "contrawr/errors.hpp"

namespace contrawr {

enum class LossVariant { contrawr, contrawr_plus, nce };

inline const char* loss_variant_name(LossVariant v) {
  switch (v) {
    case LossVariant::contrawr: return "contrawr";
    case LossVariant::contrawr_plus: return "contrawr_plus";
    case LossVariant::nce: return "nce";
  }
  return "?";
}

struct LossConfig {
  LossVariant variant = LossVariant::contrawr;
  double sigma = 2.0;        // Gaussian kernel width
  double delta = 0.2;        // triplet margin
  double temperature = 2.0;  // instance-aware softmax temperature
  bool include_self = true;  // anchor's own positive counts in the world average
};

inline void validate_loss_config(const LossConfig& config) {
  if (!(config.sigma > 0.0)) throw parameter_error("loss: sigma must be positive");
  if (!(config.delta > 0.0)) throw parameter_error("loss: delta must be positive");
  if (!(config.temperature > 0.0)) throw parameter_error("loss: temperature must be positive");
}

// The largest achievable |sim(zi, zw) - sim(zi, zj)| on the unit ball:
// 1 - exp(-2/sigma^2). A margin at or above it keeps the hinge permanently
// open; callers treat that as a configuration smell, not an error, since
// the ablation sweeps deliberately cross it.
inline double margin_similarity_gap(double sigma) {
  return 1.0 - std::exp(-2.0 / (sigma * sigma));
}

// ---------------------------------------------------------------------------
// Plain numeric forms (the similarity measures as defined on vectors)

namespace loss_detail {

inline double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw shape_error("similarity: dimension mismatch");
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
  return sq;
}

inline double norm(const std::vector<double>& a) {
  double sq = 0.0;
  for (double v : a) sq += v * v;
  return std::sqrt(sq);
}

inline void require_unit(const std::vector<double>& a, const char* what) {
  if (std::abs(norm(a) - 1.0) > 1e-4) {
    throw contract_error(std::string("similarity: ") + what + " must be unit-norm");
  }
}

}  // namespace loss_detail

// Gaussian kernel on the closed unit ball: exp(-||a - b||^2 / (2 sigma^2)).
inline double gaussian_sim(const std::vector<double>& a, const std::vector<double>& b,
                           double sigma) {
  if (!(sigma > 0.0)) throw parameter_error("gaussian_sim: sigma must be positive");
  return std::exp(-loss_detail::squared_distance(a, b) / (2.0 * sigma * sigma));
}

// Inner product of unit vectors; equals 1 - ||a - b||^2 / 2.
inline double cosine_sim(const std::vector<double>& a, const std::vector<double>& b) {
  loss_detail::require_unit(a, "cosine argument");
  loss_detail::require_unit(b, "cosine argument");
  if (a.size() != b.size()) throw shape_error("cosine_sim: dimension mismatch");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return dot;
}

// Batch Monte Carlo approximation of the world representation: the
// arithmetic mean of the projection rows. Stays inside the unit ball.
inline std::vector<double> world_representation(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw parameter_error("world_representation: empty batch");
  std::vector<double> mean(rows.front().size(), 0.0);
  for (const auto& row : rows) {
    if (row.size() != mean.size()) throw shape_error("world_representation: ragged rows");
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += row[i];
  }
  for (double& v : mean) v /= static_cast<double>(rows.size());
  return mean;
}

// Instance-aware world representation: softmax-weighted batch average with
// weights proportional to exp(<z_k, anchor> / T), computed max-subtracted.
inline std::vector<double> instance_world_representation(
    const std::vector<std::vector<double>>& rows, const std::vector<double>& anchor,
    double temperature) {
  if (!(temperature > 0.0)) {
    throw parameter_error("instance_world_representation: temperature must be positive");
  }
  if (rows.empty()) throw parameter_error("instance_world_representation: empty batch");

  std::vector<double> scores(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k].size() != anchor.size()) {
      throw shape_error("instance_world_representation: dimension mismatch");
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < anchor.size(); ++i) dot += rows[k][i] * anchor[i];
    scores[k] = dot / temperature;
  }
  double hi = scores[0];
  for (double s : scores) hi = std::max(hi, s);
  double total = 0.0;
  for (double& s : scores) {
    s = std::exp(s - hi);
    total += s;
  }
  std::vector<double> out(anchor.size(), 0.0);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const double w = scores[k] / total;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * rows[k][i];
  }
  return out;
}

// Hinge triplet loss [sim(zi, zw) + delta - sim(zi, zj)]_+ under the
// Gaussian kernel.
inline double triplet_loss(const std::vector<double>& anchor, const std::vector<double>& positive,
                           const std::vector<double>& world, double delta, double sigma) {
  const double gap =
      gaussian_sim(anchor, world, sigma) + delta - gaussian_sim(anchor, positive, sigma);
  return std::max(gap, 0.0);
}

// NCE with cosine logits over one positive and K negatives, log-sum-exp
// stabilized. Strictly positive for K >= 1.
inline double nce_loss(const std::vector<double>& anchor, const std::vector<double>& positive,
                       const std::vector<std::vector<double>>& negatives) {
  if (negatives.empty()) throw parameter_error("nce_loss: needs at least one negative");
  std::vector<double> logits;
  logits.push_back(cosine_sim(anchor, positive));
  for (const auto& negative : negatives) logits.push_back(cosine_sim(anchor, negative));
  double hi = logits[0];
  for (double l : logits) hi = std::max(hi, l);
  double total = 0.0;
  for (double l : logits) total += std::exp(l - hi);
  return hi + std::log(total) - logits[0];
}

// ---------------------------------------------------------------------------
// Graph forms (differentiable; what the trainer and gradient checks run)

namespace loss_detail {

// Row-wise squared distances between equally shaped matrices -> [M].
template <typename S>
Var<S> rows_sqdist(Var<S> a, Var<S> b) {
  auto d = sub(a, b);
  return row_sum(mul(d, d));
}

template <typename S>
Var<S> rows_gaussian_sim(Var<S> a, Var<S> b, S sigma) {
  return vexp(scale(rows_sqdist(a, b), S(-1) / (S(2) * sigma * sigma)));
}

}  // namespace loss_detail

// World-representation rows for each anchor, per variant. For contrawr the
// row is shared (batch mean, optionally leave-one-out); for contrawr_plus
// it is the anchor-conditioned softmax average over the target rows.
template <typename S>
Var<S> world_rows_graph(Var<S> anchors, Var<S> positives, const LossConfig& config) {
  const std::size_t m_rows = positives->shape[0];
  if (config.variant == LossVariant::contrawr_plus) {
    auto logits = scale(matmul_nt(anchors, positives), S(1) / static_cast<S>(config.temperature));
    if (!config.include_self) {
      std::vector<S> mask(m_rows * m_rows, S(0));
      for (std::size_t i = 0; i < m_rows; ++i) mask[i * m_rows + i] = S(-1e9);
      logits = add(logits, make_constant<S>(std::move(mask), {m_rows, m_rows}));
    }
    return matmul(softmax_rows(logits), positives);
  }
  if (config.include_self) {
    return repeat_rows(mean_rows(positives), m_rows);
  }
  // Leave-one-out mean: (sum - own row) / (M - 1).
  if (m_rows < 2) throw parameter_error("batch_loss: leave-one-out world needs M >= 2");
  auto total = scale(mean_rows(positives), static_cast<S>(m_rows));
  return scale(sub(repeat_rows(total, m_rows), positives), S(1) / static_cast<S>(m_rows - 1));
}

// Mean per-anchor loss over the batch. Anchors come from the online network
// and may require gradients; positives are target projections (leaves).
template <typename S>
Var<S> batch_loss_graph(Var<S> anchors, Var<S> positives, const LossConfig& config) {
  validate_loss_config(config);
  if (anchors->shape.size() != 2 || anchors->shape != positives->shape) {
    throw shape_error("batch_loss: anchors/positives must be equally shaped matrices");
  }
  if (anchors->shape[0] < 2) throw parameter_error("batch_loss: batch must have M >= 2");

  if (config.variant == LossVariant::nce) {
    auto cos = matmul_nt(anchors, positives);
    return mean(sub(logsumexp_rows(cos), diag(cos)));
  }
  const S sigma = static_cast<S>(config.sigma);
  auto world = world_rows_graph(anchors, positives, config);
  auto sim_world = loss_detail::rows_gaussian_sim(anchors, world, sigma);
  auto sim_positive = loss_detail::rows_gaussian_sim(anchors, positives, sigma);
  return mean(relu(add_scalar(sub(sim_world, sim_positive), static_cast<S>(config.delta))));
}

// ---------------------------------------------------------------------------
// Batch container for matched anchor/positive rows and its numeric loss

struct ProjectionBatch {
  std::vector<std::vector<double>> anchors;    // online projections, unit rows
  std::vector<std::vector<double>> positives;  // target projections, unit rows
};

inline void validate_projection_batch(const ProjectionBatch& batch) {
  if (batch.anchors.size() < 2 || batch.anchors.size() != batch.positives.size()) {
    throw parameter_error("projection batch: needs M >= 2 matched anchor/positive rows");
  }
  for (const auto& row : batch.anchors) loss_detail::require_unit(row, "anchor row");
  for (const auto& row : batch.positives) loss_detail::require_unit(row, "positive row");
}

namespace loss_detail {

inline Var<double> rows_to_leaf(const std::vector<std::vector<double>>& rows, bool with_grad) {
  std::vector<double> flat;
  flat.reserve(rows.size() * rows.front().size());
  for (const auto& row : rows) flat.insert(flat.end(), row.begin(), row.end());
  return make_leaf<double>(std::move(flat), {rows.size(), rows.front().size()}, with_grad);
}

}  // namespace loss_detail

// Scalar batch loss; evaluates the same graph the trainer differentiates.
inline double batch_loss(const ProjectionBatch& batch, const LossConfig& config) {
  validate_projection_batch(batch);
  auto anchors = loss_detail::rows_to_leaf(batch.anchors, false);
  auto positives = loss_detail::rows_to_leaf(batch.positives, false);
  return batch_loss_graph<double>(anchors, positives, config)->val[0];
}

}  // namespace contrawr
