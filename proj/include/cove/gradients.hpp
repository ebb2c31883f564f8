#pragma once

#include <vector>

#include "cove/model.hpp"
#include "cove/objective.hpp"

namespace cove {

/// One supervised step: a context and the next item it should predict,
/// against sampled negatives.
struct TrainingInstance {
  Context ctx;
  ItemIndex positive = 0;
  std::vector<ItemIndex> negatives;
};

/// Double-precision gradient record over every trainable scalar of the
/// model: all expert blocks plus the gate matrix.
struct ModelGrads {
  std::vector<ExpertGrads> experts;
  std::vector<double> gate;

  static ModelGrads zeros(const CoVEModel& model) {
    ModelGrads g;
    g.experts.reserve(model.num_experts());
    for (std::size_t i = 0; i < model.num_experts(); ++i)
      g.experts.push_back(model.expert(i).zero_grads());
    g.gate.assign(model.gate().w.size(), 0.0);
    return g;
  }

  void clear() {
    for (auto& e : experts)
      for (auto& b : e.blocks) std::fill(b.begin(), b.end(), 0.0);
    std::fill(gate.begin(), gate.end(), 0.0);
  }
};

/// Computes the configured ranking loss for one instance and accumulates
/// dloss/dtheta into `grads` for every trainable block, differentiating
/// through the gate softmax and the fusion of the model's variant. With
/// `frozen_gate` set the given weights are treated as constants (uniform-gate
/// ablation, vertex checks): no gradient reaches W_g or the gate inputs.
inline double loss_gradients(const CoVEModel& model, const TrainingInstance& inst,
                             LossKind kind, ModelGrads& grads,
                             const GateWeights* frozen_gate = nullptr) {
  const std::size_t n = model.num_experts();
  const std::size_t d = model.dim();

  std::vector<ExpertOutput> outs = model.forward_all(inst.ctx);
  std::vector<std::vector<double>> gate_inputs;
  gate_inputs.reserve(n);
  for (const auto& o : outs) gate_inputs.push_back(o.gate_input);

  GateWeights gw;
  if (frozen_gate != nullptr) {
    gw = *frozen_gate;
  } else {
    gw = gate_forward(gate_inputs, model.gate());
  }
  const std::vector<double>& w = gw.weights;

  // candidate scores: positive first, then negatives in order
  std::vector<ItemIndex> cands;
  cands.reserve(1 + inst.negatives.size());
  cands.push_back(inst.positive);
  cands.insert(cands.end(), inst.negatives.begin(), inst.negatives.end());
  const std::size_t nc = cands.size();

  std::vector<double> fused_h;
  std::vector<std::vector<double>> psi;          // CoVE_h: fused embedding per candidate
  std::vector<std::vector<double>> expert_score;  // CoVE_s: r_{i,p} per expert x candidate
  std::vector<double> r(nc, 0.0);

  if (model.variant() == FusionVariant::kHidden) {
    fused_h.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) axpy(w[i], outs[i].hidden, fused_h);
    psi.assign(nc, std::vector<double>(d, 0.0));
    for (std::size_t c = 0; c < nc; ++c) {
      double beta = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        axpy(w[i], model.expert(i).item_embedding(cands[c]), psi[c]);
        beta += w[i] * model.expert(i).item_bias(cands[c]);
      }
      r[c] = dot(std::span<const double>(fused_h), std::span<const double>(psi[c])) + beta;
    }
  } else {
    expert_score.assign(n, std::vector<double>(nc, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < nc; ++c) {
        const auto emb = model.expert(i).item_embedding(cands[c]);
        expert_score[i][c] = dot(emb, std::span<const double>(outs[i].hidden)) +
                             model.expert(i).item_bias(cands[c]);
        r[c] += w[i] * expert_score[i][c];
      }
    }
  }

  RankingBatch batch;
  batch.positive_score = r[0];
  batch.negative_scores.assign(r.begin() + 1, r.end());
  const double loss = ranking_loss(kind, batch);
  ScoreGrad sg = ranking_loss_grad(kind, batch);

  std::vector<double> dr(nc);
  dr[0] = sg.d_positive;
  for (std::size_t c = 1; c < nc; ++c) dr[c] = sg.d_negatives[c - 1];

  std::vector<double> dw(n, 0.0);
  std::vector<std::vector<double>> d_hidden(n, std::vector<double>(d, 0.0));

  if (model.variant() == FusionVariant::kHidden) {
    std::vector<double> dh(d, 0.0);
    for (std::size_t c = 0; c < nc; ++c) {
      axpy(dr[c], psi[c], dh);
      for (std::size_t i = 0; i < n; ++i) {
        // r = (sum_e w_e h_e) . (sum_f w_f Psi_f) + sum_e w_e beta_e
        const auto emb = model.expert(i).item_embedding(cands[c]);
        dw[i] += dr[c] * (dot(std::span<const double>(outs[i].hidden),
                              std::span<const double>(psi[c])) +
                          dot(emb, std::span<const double>(fused_h)) +
                          model.expert(i).item_bias(cands[c]));
        auto& ge = grads.experts[i];
        double* emb_row = ge.blocks[0].data() + cands[c] * d;
        const double coeff = w[i] * dr[c];
        for (std::size_t x = 0; x < d; ++x) emb_row[x] += coeff * fused_h[x];
        ge.blocks[1][cands[c]] += coeff;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t x = 0; x < d; ++x) d_hidden[i][x] = w[i] * dh[x];
    }
  } else {
    for (std::size_t c = 0; c < nc; ++c) {
      for (std::size_t i = 0; i < n; ++i) {
        dw[i] += dr[c] * expert_score[i][c];
        const double coeff = w[i] * dr[c];
        auto& ge = grads.experts[i];
        const auto emb = model.expert(i).item_embedding(cands[c]);
        double* emb_row = ge.blocks[0].data() + cands[c] * d;
        for (std::size_t x = 0; x < d; ++x) {
          emb_row[x] += coeff * outs[i].hidden[x];
          d_hidden[i][x] += coeff * static_cast<double>(emb[x]);
        }
        ge.blocks[1][cands[c]] += coeff;
      }
    }
  }

  std::vector<std::vector<double>> d_inputs(n, std::vector<double>(d, 0.0));
  if (frozen_gate == nullptr) {
    std::vector<double> d_logits = softmax_backward(w, dw);
    gate_backward(gate_inputs, model.gate(), d_logits, grads.gate, d_inputs);
  }

  for (std::size_t i = 0; i < n; ++i)
    model.expert(i).backward(inst.ctx, d_hidden[i], d_inputs[i], grads.experts[i]);

  return loss;
}

/// SGD step: p -= rate * g for every scalar, float32 storage updated from
/// double gradients. Separate gate rate supports the per-block override.
inline void apply_sgd(CoVEModel& model, const ModelGrads& grads, double rate,
                      double gate_rate) {
  for (std::size_t i = 0; i < model.num_experts(); ++i) {
    auto& blocks = model.expert(i).blocks();
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      auto& v = blocks[b].v;
      const auto& g = grads.experts[i].blocks[b];
      for (std::size_t x = 0; x < v.size(); ++x)
        v[x] = static_cast<float>(static_cast<double>(v[x]) - rate * g[x]);
    }
  }
  auto& gv = model.gate().w;
  for (std::size_t x = 0; x < gv.size(); ++x)
    gv[x] = static_cast<float>(static_cast<double>(gv[x]) - gate_rate * grads.gate[x]);
}

}  // namespace cove
