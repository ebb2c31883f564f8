#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "cove/common.hpp"

namespace cove {

enum class LossKind : std::uint8_t { kBpr = 0, kBprMax = 1 };

inline const char* loss_name(LossKind k) {
  return k == LossKind::kBpr ? "bpr" : "bpr-max";
}

inline LossKind parse_loss(const std::string& s) {
  if (s == "bpr") return LossKind::kBpr;
  if (s == "bpr-max" || s == "bprmax" || s == "bpr_max") return LossKind::kBprMax;
  throw ConfigError("unknown loss: " + s + " (expected bpr or bpr-max)");
}

/// One ranking instance: the positive item's score against N_I negatives.
struct RankingBatch {
  double positive_score = 0.0;
  std::vector<double> negative_scores;
};

inline constexpr double kBprMaxClamp = 1e-12;

/// Pairwise BPR: mean over pairs of -log sigmoid(r_i - r_j), evaluated as
/// softplus(r_j - r_i) so large negative margins cannot overflow.
inline double bpr_loss(const RankingBatch& batch) {
  if (batch.negative_scores.empty())
    throw std::invalid_argument("bpr_loss: no negatives");
  double sum = 0.0;
  for (double rj : batch.negative_scores) sum += softplus(rj - batch.positive_score);
  return sum / static_cast<double>(batch.negative_scores.size());
}

/// BPR-max: negatives are weighted by their softmax score, so easy (low
/// scoring) negatives contribute little. The inner sum is clamped below
/// before the log to survive all-hard-negative batches.
inline double bpr_max_loss(const RankingBatch& batch) {
  const auto& neg = batch.negative_scores;
  if (neg.empty()) throw std::invalid_argument("bpr_max_loss: no negatives");
  const double m = *std::max_element(neg.begin(), neg.end());
  double denom = 0.0;
  for (double rj : neg) denom += std::exp(rj - m);
  double inner = 0.0;
  for (double rj : neg) {
    const double s = std::exp(rj - m) / denom;
    inner += s * sigmoid(batch.positive_score - rj);
  }
  return -std::log(std::max(inner, kBprMaxClamp));
}

inline double ranking_loss(LossKind kind, const RankingBatch& batch) {
  return kind == LossKind::kBpr ? bpr_loss(batch) : bpr_max_loss(batch);
}

struct ScoreGrad {
  double d_positive = 0.0;
  std::vector<double> d_negatives;
};

inline ScoreGrad bpr_loss_grad(const RankingBatch& batch) {
  ScoreGrad g;
  const std::size_t n = batch.negative_scores.size();
  g.d_negatives.resize(n);
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t j = 0; j < n; ++j) {
    // d/dx softplus(-x) = -sigmoid(-x), x = r_i - r_j
    const double s = sigmoid(batch.negative_scores[j] - batch.positive_score);
    g.d_positive -= inv * s;
    g.d_negatives[j] = inv * s;
  }
  return g;
}

inline ScoreGrad bpr_max_loss_grad(const RankingBatch& batch) {
  const auto& neg = batch.negative_scores;
  const std::size_t n = neg.size();
  const double m = *std::max_element(neg.begin(), neg.end());
  double denom = 0.0;
  for (double rj : neg) denom += std::exp(rj - m);
  std::vector<double> s(n), sig(n);
  double inner = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    s[j] = std::exp(neg[j] - m) / denom;
    sig[j] = sigmoid(batch.positive_score - neg[j]);
    inner += s[j] * sig[j];
  }
  ScoreGrad g;
  g.d_negatives.assign(n, 0.0);
  if (inner <= kBprMaxClamp) return g;  // clamped region: flat
  const double dinner = -1.0 / inner;
  for (std::size_t j = 0; j < n; ++j) {
    const double dsig = sig[j] * (1.0 - sig[j]);
    g.d_positive += dinner * s[j] * dsig;
    // d inner / d r_j = -s_j sig'_j + s_j sig_j - s_j * inner
    g.d_negatives[j] = dinner * (-s[j] * dsig + s[j] * sig[j] - s[j] * inner);
  }
  return g;
}

inline ScoreGrad ranking_loss_grad(LossKind kind, const RankingBatch& batch) {
  return kind == LossKind::kBpr ? bpr_loss_grad(batch) : bpr_max_loss_grad(batch);
}

}  // namespace cove
