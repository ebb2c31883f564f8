#pragma once

#include <vector>

#include "cove/experts.hpp"
#include "cove/gating.hpp"

namespace cove {

enum class FusionVariant : std::uint8_t { kHidden = 0, kScore = 1 };

inline const char* variant_name(FusionVariant v) {
  return v == FusionVariant::kHidden ? "hidden" : "score";
}

inline FusionVariant parse_variant(const std::string& s) {
  if (s == "hidden" || s == "cove_h" || s == "h") return FusionVariant::kHidden;
  if (s == "score" || s == "cove_s" || s == "s") return FusionVariant::kScore;
  throw ConfigError("unknown fusion variant: " + s);
}

/// Gate-weighted combination of expert components. The fused item embedding
/// and bias are evaluated lazily per item: they depend on the query's gate
/// weights, so materializing an N x d fused matrix per request would be
/// wasted work.
struct FusedRepresentation {
  std::vector<double> h;
  std::span<const std::unique_ptr<Expert>> experts;
  const GateWeights* weights = nullptr;

  std::vector<double> psi(ItemIndex p) const {
    std::vector<double> out(h.size(), 0.0);
    for (std::size_t i : weights->active_set)
      axpy(weights->weights[i], experts[i]->item_embedding(p), out);
    return out;
  }

  double beta(ItemIndex p) const {
    double b = 0.0;
    for (std::size_t i : weights->active_set)
      b += weights->weights[i] * experts[i]->item_bias(p);
    return b;
  }

  double score(ItemIndex p) const {
    auto e = psi(p);
    return dot(std::span<const double>(h), std::span<const double>(e)) + beta(p);
  }
};

/// Eq.-level hidden fusion: h(u), Psi(p), beta(p) as gate-weighted sums over
/// the experts' standardized components. Zero-weight experts are skipped, so
/// a one-hot gate reproduces the corresponding expert bit-for-bit.
inline FusedRepresentation fuse_hidden(std::span<const ExpertOutput> outputs,
                                       std::span<const std::unique_ptr<Expert>> experts,
                                       const GateWeights& weights) {
  if (outputs.size() != weights.weights.size() || experts.size() != outputs.size())
    throw std::invalid_argument("fuse_hidden: roster/weights size mismatch");
  FusedRepresentation fused;
  fused.experts = experts;
  fused.weights = &weights;
  std::size_t d = 0;
  for (std::size_t i : weights.active_set) {
    d = outputs[i].hidden.size();
    break;
  }
  fused.h.assign(d, 0.0);
  for (std::size_t i : weights.active_set) {
    if (outputs[i].hidden.size() != d)
      throw std::invalid_argument("fuse_hidden: hidden dimension mismatch");
    axpy(weights.weights[i], outputs[i].hidden, fused.h);
  }
  return fused;
}

/// r[p] = h(u) . Psi(p) + beta(p) over the full catalog. Implemented as the
/// weight-distributed form sum_i g_i (h . Psi_i(p) + beta_i(p)), which is
/// algebraically identical and shares the scoring kernel with CoVE_s.
inline std::vector<double> score_hidden(const FusedRepresentation& fused,
                                        std::size_t num_items) {
  std::vector<double> scores(num_items, 0.0);
  for (std::size_t i : fused.weights->active_set)
    fused.experts[i]->accumulate_scores(fused.weights->weights[i], fused.h, scores);
  return scores;
}

/// CoVE_s: gate-weighted sum of per-expert full-catalog score vectors.
inline std::vector<double> fuse_scores(std::span<const std::vector<double>> per_expert,
                                       const GateWeights& weights) {
  if (per_expert.size() != weights.weights.size())
    throw std::invalid_argument("fuse_scores: roster/weights size mismatch");
  std::size_t n_items = 0;
  for (std::size_t i : weights.active_set) n_items = per_expert[i].size();
  std::vector<double> out(n_items, 0.0);
  for (std::size_t i : weights.active_set) {
    if (per_expert[i].size() != n_items)
      throw std::invalid_argument("fuse_scores: score vector length mismatch");
    axpy(weights.weights[i], per_expert[i], out);
  }
  return out;
}

}  // namespace cove
