#pragma once

#include <memory>
#include <vector>

#include "cove/experts.hpp"
#include "cove/fusion.hpp"
#include "cove/gating.hpp"

namespace cove {

/// The composed model: an ordered roster of experts plus the gate. Training
/// always runs the continuous gate; inference may sparsify via top-k.
class CoVEModel {
 public:
  CoVEModel() = default;

  CoVEModel(FusionVariant variant, std::vector<ExpertKind> roster, std::size_t num_items,
            std::size_t num_users, std::size_t dim, std::size_t max_session_len,
            GateInputMode gate_mode, std::uint64_t seed)
      : variant_(variant),
        dim_(dim),
        num_items_(num_items),
        num_users_(num_users),
        max_session_len_(max_session_len),
        gate_mode_(gate_mode),
        seed_(seed) {
    if (roster.empty()) throw ConfigError("model: empty expert roster");
    for (ExpertKind k : roster)
      experts_.push_back(make_expert(k, num_items, num_users, dim, max_session_len, gate_mode));
    gate_.num_experts = roster.size();
    gate_.input_dim = roster.size() * dim;
    gate_.w.assign(gate_.input_dim * gate_.num_experts, 0.0f);
    init_params();
  }

  FusionVariant variant() const { return variant_; }
  std::size_t dim() const { return dim_; }
  std::size_t num_items() const { return num_items_; }
  std::size_t num_users() const { return num_users_; }
  std::size_t num_experts() const { return experts_.size(); }
  std::size_t max_session_len() const { return max_session_len_; }
  GateInputMode gate_mode() const { return gate_mode_; }
  std::uint64_t seed() const { return seed_; }
  void set_seed(std::uint64_t s) { seed_ = s; }
  void set_variant(FusionVariant v) { variant_ = v; }

  /// Ablation mode: the gate is pinned at g_i = 1/n for training and
  /// inference alike; W_g is ignored.
  bool uniform_gate_mode() const { return uniform_gate_; }
  void set_uniform_gate_mode(bool on) { uniform_gate_ = on; }

  std::span<const std::unique_ptr<Expert>> experts() const {
    return std::span<const std::unique_ptr<Expert>>(experts_.data(), experts_.size());
  }
  Expert& expert(std::size_t i) { return *experts_[i]; }
  const Expert& expert(std::size_t i) const { return *experts_[i]; }
  GateParams& gate() { return gate_; }
  const GateParams& gate() const { return gate_; }

  std::vector<ExpertKind> roster() const {
    std::vector<ExpertKind> r;
    for (const auto& e : experts_) r.push_back(e->kind());
    return r;
  }

  void init_params() {
    Rng rng(seed_);
    for (auto& e : experts_) e->init(rng);
    const double scale = 0.1 / std::sqrt(static_cast<double>(dim_));
    gate_.init(rng, scale);
  }

  /// Continuous-gate forward used during training: all experts run, the gate
  /// conditions on every gate input.
  GateWeights gate_weights(std::span<const ExpertOutput> outputs) const {
    if (uniform_gate_) return uniform_gate(experts_.size());
    std::vector<std::vector<double>> inputs;
    inputs.reserve(outputs.size());
    for (const auto& o : outputs) inputs.push_back(o.gate_input);
    return gate_forward(inputs, gate_);
  }

  std::vector<ExpertOutput> forward_all(const Context& ctx) const {
    std::vector<ExpertOutput> outs;
    outs.reserve(experts_.size());
    for (const auto& e : experts_) outs.push_back(e->forward(ctx));
    return outs;
  }

  /// Full-catalog scores under the continuous gate (training-mode scoring).
  std::vector<double> score_catalog(const Context& ctx) const {
    auto outs = forward_all(ctx);
    GateWeights gw = gate_weights(outs);
    return fused_scores(outs, gw);
  }

  /// Sparse inference per Eq. (14): gate logits come from every expert's
  /// (cheap) gate input, then only the top-k experts execute their forward
  /// and scoring paths.
  std::vector<double> infer(const Context& ctx, std::size_t k) const {
    GateWeights gw;
    if (uniform_gate_) {
      gw = topk_gate(std::vector<double>(experts_.size(), 0.0), k);
    } else {
      std::vector<std::vector<double>> inputs;
      inputs.reserve(experts_.size());
      for (const auto& e : experts_) inputs.push_back(e->gate_input(ctx));
      gw = topk_gate(gate_logits(inputs, gate_), k);
    }

    std::vector<ExpertOutput> outs(experts_.size());
    for (std::size_t i : gw.active_set) outs[i] = experts_[i]->forward(ctx);
    return fused_scores(outs, gw);
  }

  /// Scores under externally supplied gate weights (uniform-gate ablation,
  /// one-hot vertex checks). Only active experts are evaluated.
  std::vector<double> score_with_gate(const Context& ctx, const GateWeights& gw) const {
    std::vector<ExpertOutput> outs(experts_.size());
    for (std::size_t i : gw.active_set) outs[i] = experts_[i]->forward(ctx);
    return fused_scores(outs, gw);
  }

  std::vector<double> fused_scores(std::span<const ExpertOutput> outs,
                                   const GateWeights& gw) const {
    if (variant_ == FusionVariant::kHidden) {
      FusedRepresentation fused = fuse_hidden(outs, experts(), gw);
      return score_hidden(fused, num_items_);
    }
    std::vector<double> scores(num_items_, 0.0);
    for (std::size_t i : gw.active_set)
      experts_[i]->accumulate_scores(gw.weights[i], outs[i].hidden, scores);
    return scores;
  }

  CoVEModel clone() const {
    CoVEModel m;
    m.variant_ = variant_;
    m.dim_ = dim_;
    m.num_items_ = num_items_;
    m.num_users_ = num_users_;
    m.max_session_len_ = max_session_len_;
    m.gate_mode_ = gate_mode_;
    m.uniform_gate_ = uniform_gate_;
    m.seed_ = seed_;
    m.gate_ = gate_;
    for (const auto& e : experts_) {
      m.experts_.push_back(make_expert(e->kind(), num_items_, num_users_, dim_,
                                       max_session_len_, gate_mode_));
      m.experts_.back()->blocks() = e->blocks();
    }
    return m;
  }

  bool params_equal(const CoVEModel& other) const {
    if (gate_.w != other.gate_.w || experts_.size() != other.experts_.size()) return false;
    for (std::size_t i = 0; i < experts_.size(); ++i) {
      const auto& a = experts_[i]->blocks();
      const auto& b = other.experts_[i]->blocks();
      if (a.size() != b.size()) return false;
      for (std::size_t j = 0; j < a.size(); ++j)
        if (a[j].v != b[j].v) return false;
    }
    return true;
  }

 private:
  FusionVariant variant_ = FusionVariant::kScore;
  std::size_t dim_ = 0, num_items_ = 0, num_users_ = 0, max_session_len_ = 50;
  GateInputMode gate_mode_ = GateInputMode::kPerExpertDefault;
  bool uniform_gate_ = false;
  std::uint64_t seed_ = 0;
  std::vector<std::unique_ptr<Expert>> experts_;
  GateParams gate_;
};

}  // namespace cove
