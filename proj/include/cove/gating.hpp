#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <vector>

#include "cove/common.hpp"

namespace cove {

/// Trainable gate: one linear layer over the concatenated expert gate inputs,
/// stored row-major as (n*d) x n.
struct GateParams {
  std::size_t input_dim = 0;   // n * d
  std::size_t num_experts = 0;
  std::vector<float> w;        // input_dim x num_experts

  void init(Rng& rng, double scale) {
    w.resize(input_dim * num_experts);
    for (auto& x : w) x = static_cast<float>(rng.uniform(-scale, scale));
  }
};

/// A point on the n-expert probability simplex. active_set lists the experts
/// with nonzero weight (all n for the continuous gate, k under TopK).
struct GateWeights {
  std::vector<double> weights;
  std::vector<std::size_t> active_set;

  bool on_simplex(double tol = 1e-6) const {
    double sum = 0.0;
    for (double w : weights) {
      if (w < 0.0) return false;
      sum += w;
    }
    return std::abs(sum - 1.0) <= tol;
  }
};

/// Max-subtracted softmax.
inline std::vector<double> softmax(std::span<const double> z) {
  if (z.empty()) throw std::invalid_argument("softmax: empty input");
  const double m = *std::max_element(z.begin(), z.end());
  std::vector<double> out(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::exp(z[i] - m);
    sum += out[i];
  }
  for (auto& x : out) x /= sum;
  return out;
}

inline std::vector<double> gate_logits(std::span<const std::vector<double>> gate_inputs,
                                       const GateParams& params) {
  const std::size_t n = params.num_experts;
  if (gate_inputs.size() != n)
    throw std::invalid_argument("gate: expected " + std::to_string(n) + " inputs");
  const std::size_t d = params.input_dim / n;
  std::vector<double> logits(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (gate_inputs[i].size() != d)
      throw std::invalid_argument("gate: input dimension mismatch");
    // rows i*d .. i*d+d-1 of W correspond to expert i's slice of the concat
    for (std::size_t r = 0; r < d; ++r) {
      const float* row = params.w.data() + (i * d + r) * n;
      const double x = gate_inputs[i][r];
      for (std::size_t j = 0; j < n; ++j) logits[j] += x * static_cast<double>(row[j]);
    }
  }
  return logits;
}

/// Continuous gate: softmax over the linear layer; every expert active.
inline GateWeights gate_forward(std::span<const std::vector<double>> gate_inputs,
                                const GateParams& params) {
  GateWeights gw;
  gw.weights = softmax(gate_logits(gate_inputs, params));
  gw.active_set.resize(params.num_experts);
  std::iota(gw.active_set.begin(), gw.active_set.end(), 0);
  return gw;
}

/// Sparse gate: keep the k largest logits (ties to the lower index) and
/// renormalize over the survivors; masked entries are excluded from the
/// normalization sum rather than set to an actual -inf.
inline GateWeights topk_gate(std::span<const double> logits, std::size_t k) {
  const std::size_t n = logits.size();
  if (k < 1 || k > n) throw std::invalid_argument("topk_gate: k out of range");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return logits[a] > logits[b];  // stable: equal logits keep lower index first
  });
  GateWeights gw;
  gw.active_set.assign(order.begin(), order.begin() + k);
  std::sort(gw.active_set.begin(), gw.active_set.end());

  double m = logits[gw.active_set[0]];
  for (std::size_t idx : gw.active_set) m = std::max(m, logits[idx]);
  double sum = 0.0;
  std::vector<double> e(k);
  for (std::size_t i = 0; i < k; ++i) {
    e[i] = std::exp(logits[gw.active_set[i]] - m);
    sum += e[i];
  }
  gw.weights.assign(n, 0.0);
  for (std::size_t i = 0; i < k; ++i) gw.weights[gw.active_set[i]] = e[i] / sum;
  return gw;
}

/// Ablation gate: every expert weighted 1/n.
inline GateWeights uniform_gate(std::size_t n) {
  if (n < 1) throw std::invalid_argument("uniform_gate: n must be positive");
  GateWeights gw;
  gw.weights.assign(n, 1.0 / static_cast<double>(n));
  gw.active_set.resize(n);
  std::iota(gw.active_set.begin(), gw.active_set.end(), 0);
  return gw;
}

inline GateWeights one_hot_gate(std::size_t n, std::size_t j) {
  GateWeights gw;
  gw.weights.assign(n, 0.0);
  gw.weights.at(j) = 1.0;
  gw.active_set = {j};
  return gw;
}

// d(loss)/d(logits) given softmax outputs w and d(loss)/d(weights)
inline std::vector<double> softmax_backward(std::span<const double> w,
                                            std::span<const double> dw) {
  double inner = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) inner += dw[i] * w[i];
  std::vector<double> dl(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) dl[i] = w[i] * (dw[i] - inner);
  return dl;
}

/// Accumulates gate gradients. d_logits is dL/dl; grad_w mirrors GateParams.w
/// in double precision; d_inputs receives dL/de_i per expert slice.
inline void gate_backward(std::span<const std::vector<double>> gate_inputs,
                          const GateParams& params, std::span<const double> d_logits,
                          std::span<double> grad_w,
                          std::vector<std::vector<double>>& d_inputs) {
  const std::size_t n = params.num_experts;
  const std::size_t d = params.input_dim / n;
  d_inputs.assign(n, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < d; ++r) {
      const std::size_t row = i * d + r;
      const double x = gate_inputs[i][r];
      double dz = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        grad_w[row * n + j] += x * d_logits[j];
        dz += static_cast<double>(params.w[row * n + j]) * d_logits[j];
      }
      d_inputs[i][r] = dz;
    }
  }
}

}  // namespace cove
