#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "cove/checkpoint.hpp"
#include "cove/evaluation.hpp"
#include "cove/gradients.hpp"

namespace cove {

struct TrainConfig {
  std::size_t dim = 32;
  LossKind loss = LossKind::kBprMax;
  double learning_rate = 0.05;              // [0.005, 0.1]
  std::size_t batch_size = 64;              // [32, 512]
  std::size_t epochs = 100;
  std::size_t negatives_per_positive = 0;   // uniform extras on top of in-batch
  std::uint64_t seed = 42;
  std::vector<ExpertKind> roster;
  FusionVariant variant = FusionVariant::kScore;
  GateInputMode gate_input_mode = GateInputMode::kPerExpertDefault;
  std::size_t max_session_len = 50;
  std::size_t patience = 10;
  bool uniform_gate = false;                // gating-ablation mode
  double gate_learning_rate = -1.0;         // < 0: same rate as the experts
  std::vector<std::string> init_from;       // pretrained expert checkpoints

  void validate() const {
    if (roster.empty()) throw ConfigError("config: expert roster is empty");
    if (dim < 1) throw ConfigError("config: dim must be positive");
    if (learning_rate < 0.005 || learning_rate > 0.1)
      throw ConfigError("config: learning_rate outside [0.005, 0.1]");
    if (batch_size < 32 || batch_size > 512)
      throw ConfigError("config: batch_size outside [32, 512]");
    if (max_session_len < 1) throw ConfigError("config: max_session_len must be positive");
    if (patience < 1) throw ConfigError("config: patience must be positive");
    if (gate_learning_rate > 0.1)
      throw ConfigError("config: gate_learning_rate outside [0.005, 0.1]");
  }
};

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double val_mrr = 0.0;
  double seconds = 0.0;
};

inline std::string format_epoch_log(const EpochLog& e) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "epoch=%zu loss=%.6f val_mrr=%.6f sec=%.2f", e.epoch,
                e.mean_loss, e.val_mrr, e.seconds);
  return buf;
}

struct TrainResult {
  CoVEModel model;  // best checkpoint by validation MRR
  std::vector<EpochLog> log;
  double best_val_mrr = 0.0;
  std::size_t best_epoch = 0;

  std::string digest() const {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "epochs=%zu best_epoch=%zu best_val_mrr=%.6f",
                  log.size(), best_epoch, best_val_mrr);
    return buf;
  }
};

/// Lightweight reference to one training instance; the context is
/// materialized against the training dataset on demand.
struct InstanceRef {
  UserIndex user = 0;
  std::uint32_t session = 0;
  std::uint32_t prefix = 0;  // context = history + current[0..prefix), target = current[prefix]
};

/// Enumerates every next-item prediction task in the training corpus: for
/// each session position k >= 1, the prefix before it predicts the item at
/// k. Length-1 sessions contribute nothing.
inline std::vector<InstanceRef> make_training_instances(const Dataset& train) {
  std::vector<InstanceRef> out;
  for (UserIndex u = 0; u < train.num_users(); ++u) {
    const auto& sessions = train.sessions_by_user[u];
    for (std::size_t t = 0; t < sessions.size(); ++t) {
      const std::size_t len = sessions[t].items.size();
      for (std::size_t k = 1; k < len; ++k)
        out.push_back(InstanceRef{u, static_cast<std::uint32_t>(t),
                                  static_cast<std::uint32_t>(k)});
    }
  }
  return out;
}

inline Context make_context(const Dataset& train, const InstanceRef& ref) {
  const auto& sessions = train.sessions_by_user[ref.user];
  Context ctx;
  ctx.user = ref.user;
  ctx.history = std::span<const Session>(sessions.data(), ref.session);
  ctx.current = std::span<const ItemIndex>(sessions[ref.session].items.data(), ref.prefix);
  return ctx;
}

inline ItemIndex instance_positive(const Dataset& train, const InstanceRef& ref) {
  return train.sessions_by_user[ref.user][ref.session].items[ref.prefix];
}

/// In-batch negatives (the other positives of the mini-batch) plus `extra`
/// uniform catalog draws. The instance's own positive never appears;
/// duplicates are permitted across the uniform draw.
inline std::vector<ItemIndex> sample_negatives(ItemIndex positive,
                                               std::span<const ItemIndex> batch_positives,
                                               std::size_t extra, std::size_t num_items,
                                               Rng& rng) {
  if (num_items < 2) throw DataError("sample_negatives: catalog of size 1");
  std::vector<ItemIndex> out;
  out.reserve(batch_positives.size() + extra);
  for (ItemIndex p : batch_positives)
    if (p != positive) out.push_back(p);
  for (std::size_t i = 0; i < extra; ++i) {
    ItemIndex p = static_cast<ItemIndex>(rng.below(num_items));
    while (p == positive) p = static_cast<ItemIndex>(rng.below(num_items));
    out.push_back(p);
  }
  return out;
}

namespace detail {

inline void shuffle_instances(std::vector<InstanceRef>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[rng.below(i)]);
}

inline void apply_init_from(CoVEModel& model, const std::vector<std::string>& paths) {
  std::vector<bool> consumed(model.num_experts(), false);
  for (const auto& path : paths) {
    CoVEModel pre = load_checkpoint(path);
    for (std::size_t j = 0; j < pre.num_experts(); ++j) {
      const Expert& src = pre.expert(j);
      bool placed = false;
      for (std::size_t i = 0; i < model.num_experts(); ++i) {
        if (consumed[i] || model.expert(i).kind() != src.kind()) continue;
        auto& dst_blocks = model.expert(i).blocks();
        const auto& src_blocks = src.blocks();
        if (dst_blocks.size() != src_blocks.size())
          throw DataError("init_from: block count mismatch for " + path);
        for (std::size_t b = 0; b < dst_blocks.size(); ++b) {
          if (dst_blocks[b].rows != src_blocks[b].rows ||
              dst_blocks[b].cols != src_blocks[b].cols)
            throw DataError("init_from: shape mismatch in block '" + dst_blocks[b].name +
                            "' of " + path);
          dst_blocks[b].v = src_blocks[b].v;
        }
        consumed[i] = true;
        placed = true;
        break;
      }
      if (!placed)
        throw DataError("init_from: no unfilled roster slot of kind " +
                        std::string(kind_name(src.kind())) + " for " + path);
    }
  }
}

}  // namespace detail

/// Joint training of all experts and the gate under the continuous gate
/// (or the pinned uniform gate in ablation mode), with per-epoch validation
/// MRR model selection and early stopping.
inline TrainResult train(const TrainConfig& config, const SplitDataset& split) {
  config.validate();
  const Dataset& train_ds = split.train;
  if (train_ds.num_items() < 2) throw DataError("train: catalog too small");

  CoVEModel model(config.variant, config.roster, train_ds.num_items(),
                  train_ds.num_users(), config.dim, config.max_session_len,
                  config.gate_input_mode, config.seed);
  model.set_uniform_gate_mode(config.uniform_gate);
  if (!config.init_from.empty()) detail::apply_init_from(model, config.init_from);

  TrainResult result;
  if (config.epochs == 0) {
    result.model = std::move(model);
    return result;
  }

  std::vector<InstanceRef> instances = make_training_instances(train_ds);
  if (instances.empty()) throw DataError("train: no training instances");

  const double gate_rate =
      config.gate_learning_rate > 0.0 ? config.gate_learning_rate : config.learning_rate;
  const GateWeights uniform = uniform_gate(model.num_experts());
  const GateWeights* frozen = config.uniform_gate ? &uniform : nullptr;

  Rng rng(config.seed);
  ModelGrads grads = ModelGrads::zeros(model);
  CoVEModel best = model.clone();
  double best_mrr = -1.0;
  std::size_t best_epoch = 0;
  std::size_t since_best = 0;
  std::vector<ItemIndex> batch_positives;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    detail::shuffle_instances(instances, rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < instances.size(); start += config.batch_size) {
      const std::size_t stop = std::min(start + config.batch_size, instances.size());
      batch_positives.clear();
      for (std::size_t i = start; i < stop; ++i)
        batch_positives.push_back(instance_positive(train_ds, instances[i]));
      grads.clear();
      double batch_loss = 0.0;
      for (std::size_t i = start; i < stop; ++i) {
        TrainingInstance ti;
        ti.ctx = make_context(train_ds, instances[i]);
        ti.positive = batch_positives[i - start];
        ti.negatives = sample_negatives(ti.positive, batch_positives,
                                        config.negatives_per_positive,
                                        train_ds.num_items(), rng);
        if (ti.negatives.empty()) {
          // degenerate single-instance batch: fall back to one uniform draw
          ti.negatives = sample_negatives(ti.positive, {}, 1, train_ds.num_items(), rng);
        }
        batch_loss += loss_gradients(model, ti, config.loss, grads, frozen);
      }
      if (!std::isfinite(batch_loss))
        throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch));
      const double scale = 1.0 / static_cast<double>(stop - start);
      apply_sgd(model, grads, config.learning_rate * scale, gate_rate * scale);
      loss_sum += batch_loss;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.mean_loss = loss_sum / static_cast<double>(instances.size());
    entry.val_mrr =
        evaluate(model, split, EvalMode::kValidation, model.num_experts()).mrr;
    entry.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(entry);

    if (entry.val_mrr > best_mrr) {
      best_mrr = entry.val_mrr;
      best_epoch = epoch;
      best = model.clone();
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }

  result.model = std::move(best);
  result.best_val_mrr = best_mrr;
  result.best_epoch = best_epoch;
  return result;
}

/// Trains one expert standalone: roster of one, gate trivially [1.0].
inline TrainResult train_single_expert(ExpertKind kind, TrainConfig config,
                                       const SplitDataset& split) {
  config.roster = {kind};
  return train(config, split);
}

}  // namespace cove
