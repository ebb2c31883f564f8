#pragma once

#include <array>
#include <map>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "cove/data.hpp"
#include "cove/model.hpp"

namespace cove {

/// Rank of the ground-truth item in the descending-score ordering of the
/// full catalog. Ties resolve to the expected rank: the truth sits at the
/// mean position among its equals, rounded half up for the integer rank.
/// The tie counts are kept so AUC can use the unrounded expected rank and
/// match brute-force pairwise AUC exactly.
struct RankResult {
  std::uint32_t rank = 0;         // 1-based, rounded expected rank
  std::uint32_t num_greater = 0;  // items scoring strictly above truth
  std::uint32_t num_tied = 0;     // items scoring equal, truth included
  std::uint32_t catalog = 0;

  double expected_rank() const {
    return static_cast<double>(num_greater) + (static_cast<double>(num_tied) + 1.0) / 2.0;
  }

  double auc_term() const {
    return (static_cast<double>(catalog) - expected_rank()) /
           (static_cast<double>(catalog) - 1.0);
  }
  double mrr_term() const { return 1.0 / static_cast<double>(rank); }
  double ndcg_term(std::size_t k) const {
    return rank <= k ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
  }
  double recall_term(std::size_t k) const { return rank <= k ? 1.0 : 0.0; }
};

inline RankResult rank_ground_truth(std::span<const double> scores, ItemIndex truth) {
  if (truth >= scores.size())
    throw std::invalid_argument("rank_ground_truth: truth index out of range");
  const double s = scores[truth];
  RankResult r;
  r.catalog = static_cast<std::uint32_t>(scores.size());
  for (double x : scores) {
    if (x > s)
      ++r.num_greater;
    else if (x == s)
      ++r.num_tied;
  }
  // expected rank = greater + (tied + 1) / 2, rounded half up
  r.rank = static_cast<std::uint32_t>((2 * r.num_greater + r.num_tied + 2) / 2);
  return r;
}

struct InteractionRecord {
  UserIndex user = 0;
  RankResult rank;
};

struct MetricsReport {
  std::vector<InteractionRecord> per_interaction;
  double auc = 0.0;
  double mrr = 0.0;
  std::map<std::size_t, double> ndcg;    // k -> value
  std::map<std::size_t, double> recall;  // k -> value
  std::size_t interactions = 0;
  std::size_t users = 0;

  std::vector<double> reciprocal_ranks() const {
    std::vector<double> rr;
    rr.reserve(per_interaction.size());
    for (const auto& p : per_interaction) rr.push_back(p.rank.mrr_term());
    return rr;
  }
};

inline MetricsReport compute_metrics(std::vector<InteractionRecord> records,
                                     const std::vector<std::size_t>& ks = {10, 20}) {
  if (records.empty()) throw DataError("compute_metrics: no interactions");
  MetricsReport rep;
  rep.per_interaction = std::move(records);
  rep.interactions = rep.per_interaction.size();
  for (std::size_t k : ks) {
    rep.ndcg[k] = 0.0;
    rep.recall[k] = 0.0;
  }
  std::vector<UserIndex> users;
  for (const auto& rec : rep.per_interaction) {
    rep.auc += rec.rank.auc_term();
    rep.mrr += rec.rank.mrr_term();
    for (std::size_t k : ks) {
      rep.ndcg[k] += rec.rank.ndcg_term(k);
      rep.recall[k] += rec.rank.recall_term(k);
    }
    users.push_back(rec.user);
  }
  const double inv = 1.0 / static_cast<double>(rep.interactions);
  rep.auc *= inv;
  rep.mrr *= inv;
  for (std::size_t k : ks) {
    rep.ndcg[k] *= inv;
    rep.recall[k] *= inv;
  }
  std::sort(users.begin(), users.end());
  rep.users = std::unique(users.begin(), users.end()) - users.begin();
  return rep;
}

enum class EvalMode { kValidation, kTest };

/// Full-catalog next-item evaluation over the held-out sessions: every
/// position k >= 1 of the held-out session is predicted from the user's
/// training history plus the held-out prefix. `k_gate` selects the sparse
/// gate width (k_gate = n reproduces continuous gating). `last_only`
/// restricts scoring to the final position of each held-out session.
inline MetricsReport evaluate(const CoVEModel& model, const SplitDataset& split,
                              EvalMode mode, std::size_t k_gate,
                              bool last_only = false,
                              const std::vector<std::size_t>& ks = {10, 20}) {
  if (model.num_items() != split.train.num_items())
    throw DataError("evaluate: model/dataset catalog mismatch");
  const auto& held = mode == EvalMode::kValidation ? split.validation : split.test;
  std::vector<InteractionRecord> records;
  for (UserIndex u = 0; u < split.train.num_users(); ++u) {
    const auto& session = held[u];
    if (session.items.size() < 2) continue;
    const auto& history = split.train.sessions_by_user[u];
    Context ctx;
    ctx.user = u;
    ctx.history = std::span<const Session>(history.data(), history.size());
    const std::size_t len = session.items.size();
    const std::size_t first = last_only ? len - 1 : 1;
    for (std::size_t k = first; k < len; ++k) {
      ctx.current = std::span<const ItemIndex>(session.items.data(), k);
      std::vector<double> scores = model.infer(ctx, k_gate);
      InteractionRecord rec;
      rec.user = u;
      rec.rank = rank_ground_truth(scores, session.items[k]);
      records.push_back(rec);
    }
  }
  if (records.empty()) throw DataError("evaluate: held-out set yields no interactions");
  return compute_metrics(std::move(records), ks);
}

struct TTestResult {
  double t = 0.0;
  double p = 1.0;  // one-tailed upper
  bool degenerate = false;
};

/// One-tailed paired-sample Student's t-test (upper tail: is a > b?).
/// Zero-variance difference vectors take the degenerate branch: p = 0 when
/// the mean difference is positive, else p = 1.
inline TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("paired_t_test: unpaired input");
  const std::size_t n = a.size();
  if (n < 2) throw std::invalid_argument("paired_t_test: need at least 2 pairs");
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = (a[i] - b[i]) - mean;
    ss += d * d;
  }
  const double var = ss / static_cast<double>(n - 1);
  TTestResult res;
  if (var == 0.0) {
    res.degenerate = true;
    res.t = 0.0;
    res.p = mean > 0.0 ? 0.0 : 1.0;
    return res;
  }
  res.t = mean / std::sqrt(var / static_cast<double>(n));
  boost::math::students_t_distribution<double> dist(static_cast<double>(n - 1));
  res.p = boost::math::cdf(boost::math::complement(dist, res.t));
  return res;
}

/// Per-interaction indicator of which preference horizon won: 1 when the
/// long-term model ranked the ground truth strictly higher (smaller rank)
/// than the short-term model, 0 when strictly lower, 0.5 on ties.
struct PreferenceBits {
  std::vector<double> bits;              // per interaction
  std::vector<double> per_user_mean;     // indexed by dense user with >= 1 test interaction
  std::vector<UserIndex> users;          // parallel to per_user_mean
  std::array<std::size_t, 10> histogram{};  // per-user means binned in 0.1 steps
  double corpus_mean = 0.0;              // over interactions
  double user_mean = 0.0;                // over per-user means
};

inline PreferenceBits preference_bits(const MetricsReport& long_term,
                                      const MetricsReport& short_term) {
  const auto& a = long_term.per_interaction;
  const auto& b = short_term.per_interaction;
  if (a.size() != b.size()) throw DataError("preference_bits: unpaired rank lists");
  PreferenceBits out;
  out.bits.reserve(a.size());
  std::map<UserIndex, std::pair<double, std::size_t>> per_user;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].user != b[i].user) throw DataError("preference_bits: interaction pairing broken");
    double bit = 0.5;
    if (a[i].rank.rank < b[i].rank.rank) bit = 1.0;
    if (a[i].rank.rank > b[i].rank.rank) bit = 0.0;
    out.bits.push_back(bit);
    out.corpus_mean += bit;
    auto& acc = per_user[a[i].user];
    acc.first += bit;
    acc.second += 1;
  }
  out.corpus_mean /= static_cast<double>(out.bits.size());
  for (const auto& [user, acc] : per_user) {
    const double mean = acc.first / static_cast<double>(acc.second);
    out.users.push_back(user);
    out.per_user_mean.push_back(mean);
    out.user_mean += mean;
    auto bin = static_cast<std::size_t>(mean * 10.0);
    if (bin >= 10) bin = 9;  // closed last bin [0.9, 1.0]
    ++out.histogram[bin];
  }
  out.user_mean /= static_cast<double>(out.per_user_mean.size());
  return out;
}

}  // namespace cove
