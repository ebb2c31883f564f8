#pragma once

#include <cassert>
#include <memory>
#include <string>
#include <vector>

#include "cove/common.hpp"
#include "cove/data.hpp"
#include "cove/gating.hpp"

namespace cove {

enum class ExpertKind : std::uint8_t { kBpr = 0, kFpmc = 1, kGru = 2, kAttn = 3 };
enum class PreferenceTerm { kShort, kLong };

inline PreferenceTerm term_of(ExpertKind kind) {
  switch (kind) {
    case ExpertKind::kGru:
    case ExpertKind::kAttn:
      return PreferenceTerm::kShort;
    default:
      return PreferenceTerm::kLong;
  }
}

inline const char* kind_name(ExpertKind kind) {
  switch (kind) {
    case ExpertKind::kBpr: return "bpr";
    case ExpertKind::kFpmc: return "fpmc";
    case ExpertKind::kGru: return "gru";
    case ExpertKind::kAttn: return "attn";
  }
  return "?";
}

inline ExpertKind parse_kind(const std::string& s) {
  if (s == "bpr") return ExpertKind::kBpr;
  if (s == "fpmc") return ExpertKind::kFpmc;
  if (s == "gru") return ExpertKind::kGru;
  if (s == "attn" || s == "sasrec" || s == "sas") return ExpertKind::kAttn;
  throw ConfigError("unknown expert kind: " + s);
}

/// What each expert feeds the routing gate. The default follows the
/// convention of gating on item embeddings for the session encoders while
/// the factorization experts gate on their hidden vector; kLastItem makes
/// every expert gate on its own embedding of the most recent item.
enum class GateInputMode : std::uint8_t { kPerExpertDefault = 0, kLastItem = 1 };

/// A scoring query: the user plus their session history. `history` holds the
/// sessions before the current one; `current` is the live session prefix.
struct Context {
  UserIndex user = kColdUser;
  std::span<const Session> history;
  std::span<const ItemIndex> current;

  ItemIndex last_item() const {
    if (!current.empty()) return current.back();
    for (auto it = history.rbegin(); it != history.rend(); ++it)
      if (!it->items.empty()) return it->items.back();
    throw DataError("context contains no items");
  }
};

/// Standardized expert output: the d-dimensional context representation and
/// the expert's chosen input to the gate.
struct ExpertOutput {
  std::vector<double> hidden;
  std::vector<double> gate_input;
};

enum class BlockInit { kUniform, kZero };

/// One named dense block of trainable parameters, float32 storage.
struct ParamBlock {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  BlockInit init = BlockInit::kUniform;
  std::vector<float> v;

  std::size_t size() const { return rows * cols; }
  std::span<const float> row(std::size_t r) const {
    return std::span<const float>(v.data() + r * cols, cols);
  }
  std::span<float> row_mut(std::size_t r) {
    return std::span<float>(v.data() + r * cols, cols);
  }
};

/// Double-precision gradient accumulator parallel to an expert's blocks.
struct ExpertGrads {
  std::vector<std::vector<double>> blocks;
};

/// Base contract every expert satisfies: a forward pass producing the
/// standardized output, access to its item embeddings Psi / biases beta for
/// the fusion layer, and a hand-written backward pass that accumulates
/// gradients for all of its trainable blocks.
class Expert {
 public:
  Expert(ExpertKind kind, std::size_t num_items, std::size_t num_users, std::size_t dim,
         std::size_t max_session_len, GateInputMode gate_mode)
      : kind_(kind),
        num_items_(num_items),
        num_users_(num_users),
        dim_(dim),
        max_len_(max_session_len),
        gate_mode_(gate_mode) {
    add_block("item_emb", num_items_, dim_, BlockInit::kUniform);
    add_block("item_bias", num_items_, 1, BlockInit::kZero);
  }
  virtual ~Expert() = default;

  ExpertKind kind() const { return kind_; }
  PreferenceTerm term() const { return term_of(kind_); }
  std::size_t dim() const { return dim_; }
  std::size_t num_items() const { return num_items_; }
  std::size_t num_users() const { return num_users_; }
  std::size_t max_session_len() const { return max_len_; }
  GateInputMode gate_mode() const { return gate_mode_; }

  std::vector<ParamBlock>& blocks() { return blocks_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }

  std::span<const float> item_embedding(ItemIndex p) const { return blocks_[0].row(p); }
  double item_bias(ItemIndex p) const { return blocks_[1].v[p]; }

  void init(Rng& rng) {
    const double scale = 0.1 / std::sqrt(static_cast<double>(dim_));
    for (auto& b : blocks_) {
      if (b.init == BlockInit::kZero) {
        std::fill(b.v.begin(), b.v.end(), 0.0f);
      } else {
        for (auto& x : b.v) x = static_cast<float>(rng.uniform(-scale, scale));
      }
    }
  }

  virtual ExpertOutput forward(const Context& ctx) const = 0;

  /// The gate input alone, without running the full encoder. Used by sparse
  /// inference so inactive experts never execute their forward path.
  virtual std::vector<double> gate_input(const Context& ctx) const {
    return embed_item(ctx.last_item());
  }

  /// Accumulates dL/d(block) for d_hidden = dL/d(hidden) and
  /// d_gate = dL/d(gate_input). Recomputes its own forward internals.
  virtual void backward(const Context& ctx, std::span<const double> d_hidden,
                        std::span<const double> d_gate, ExpertGrads& grads) const = 0;

  /// score[p] = hidden . Psi(p) + beta(p) over the whole catalog.
  std::vector<double> scores(std::span<const double> hidden) const {
    std::vector<double> out(num_items_);
    accumulate_scores(1.0, hidden, out);
    return out;
  }

  /// out[p] += weight * (v . Psi(p) + beta(p)); shared kernel for standalone
  /// scoring and both fusion variants.
  void accumulate_scores(double weight, std::span<const double> v,
                         std::span<double> out) const {
    const ParamBlock& emb = blocks_[0];
    const ParamBlock& bias = blocks_[1];
    for (std::size_t p = 0; p < num_items_; ++p) {
      const float* row = emb.v.data() + p * dim_;
      double s = static_cast<double>(bias.v[p]);
      for (std::size_t c = 0; c < dim_; ++c) s += static_cast<double>(row[c]) * v[c];
      out[p] += weight * s;
    }
  }

  ExpertGrads zero_grads() const {
    ExpertGrads g;
    g.blocks.reserve(blocks_.size());
    for (const auto& b : blocks_) g.blocks.emplace_back(b.size(), 0.0);
    return g;
  }

 protected:
  std::size_t add_block(const std::string& name, std::size_t rows, std::size_t cols,
                        BlockInit init) {
    ParamBlock b;
    b.name = name;
    b.rows = rows;
    b.cols = cols;
    b.init = init;
    b.v.assign(rows * cols, 0.0f);
    blocks_.push_back(std::move(b));
    return blocks_.size() - 1;
  }

  std::vector<double> embed_item(ItemIndex p) const {
    std::vector<double> x(dim_);
    auto row = blocks_[0].row(p);
    for (std::size_t c = 0; c < dim_; ++c) x[c] = static_cast<double>(row[c]);
    return x;
  }

  std::span<const ItemIndex> truncate(std::span<const ItemIndex> s) const {
    if (s.size() > max_len_) return s.subspan(s.size() - max_len_);
    return s;
  }

  ExpertKind kind_;
  std::size_t num_items_, num_users_, dim_, max_len_;
  GateInputMode gate_mode_;
  std::vector<ParamBlock> blocks_;
};

// ---------------------------------------------------------------------------
// BPR: pure user-factor expert. Output depends only on the user identity,
// never on the session context (long-term by construction).
// ---------------------------------------------------------------------------
class BprExpert : public Expert {
 public:
  BprExpert(std::size_t num_items, std::size_t num_users, std::size_t dim,
            std::size_t max_len, GateInputMode mode)
      : Expert(ExpertKind::kBpr, num_items, num_users, dim, max_len, mode) {
    user_emb_ = add_block("user_emb", num_users, dim, BlockInit::kUniform);
  }

  ExpertOutput forward(const Context& ctx) const override {
    ExpertOutput out;
    out.hidden = user_vector(ctx.user);
    out.gate_input =
        gate_mode_ == GateInputMode::kLastItem ? embed_item(ctx.last_item()) : out.hidden;
    return out;
  }

  std::vector<double> gate_input(const Context& ctx) const override {
    if (gate_mode_ == GateInputMode::kLastItem) return embed_item(ctx.last_item());
    return user_vector(ctx.user);
  }

  void backward(const Context& ctx, std::span<const double> d_hidden,
                std::span<const double> d_gate, ExpertGrads& grads) const override {
    std::vector<double> du(d_hidden.begin(), d_hidden.end());
    if (gate_mode_ == GateInputMode::kLastItem) {
      axpy(1.0, d_gate, item_row(grads, ctx.last_item()));
    } else {
      for (std::size_t c = 0; c < dim_; ++c) du[c] += d_gate[c];
    }
    add_user_grad(grads.blocks[user_emb_], ctx.user, du);
  }

 protected:
  std::vector<double> user_vector(UserIndex u) const {
    const ParamBlock& ue = blocks_[user_emb_];
    std::vector<double> h(dim_, 0.0);
    if (u < num_users_) {
      auto row = ue.row(u);
      for (std::size_t c = 0; c < dim_; ++c) h[c] = static_cast<double>(row[c]);
    } else {
      // cold user: mean embedding
      for (std::size_t r = 0; r < num_users_; ++r) axpy(1.0, ue.row(r), h);
      for (auto& x : h) x /= static_cast<double>(num_users_);
    }
    return h;
  }

  void add_user_grad(std::vector<double>& g, UserIndex u,
                     std::span<const double> du) const {
    if (u < num_users_) {
      for (std::size_t c = 0; c < dim_; ++c) g[u * dim_ + c] += du[c];
    } else {
      const double inv = 1.0 / static_cast<double>(num_users_);
      for (std::size_t r = 0; r < num_users_; ++r)
        for (std::size_t c = 0; c < dim_; ++c) g[r * dim_ + c] += inv * du[c];
    }
  }

  std::span<double> item_row(ExpertGrads& grads, ItemIndex p) const {
    return std::span<double>(grads.blocks[0].data() + p * dim_, dim_);
  }

  std::size_t user_emb_;
};

// ---------------------------------------------------------------------------
// FPMC: matrix-factorization part plus a first-order Markov transition from
// the most recent item, summed into one d-vector.
// ---------------------------------------------------------------------------
class FpmcExpert : public BprExpert {
 public:
  FpmcExpert(std::size_t num_items, std::size_t num_users, std::size_t dim,
             std::size_t max_len, GateInputMode mode)
      : BprExpert(num_items, num_users, dim, max_len, mode) {
    kind_ = ExpertKind::kFpmc;
    trans_emb_ = add_block("trans_emb", num_items, dim, BlockInit::kUniform);
  }

  ExpertOutput forward(const Context& ctx) const override {
    const ItemIndex prev = ctx.last_item();
    ExpertOutput out;
    out.hidden = user_vector(ctx.user);
    auto t = blocks_[trans_emb_].row(prev);
    for (std::size_t c = 0; c < dim_; ++c) out.hidden[c] += static_cast<double>(t[c]);
    out.gate_input =
        gate_mode_ == GateInputMode::kLastItem ? embed_item(prev) : out.hidden;
    return out;
  }

  std::vector<double> gate_input(const Context& ctx) const override {
    if (gate_mode_ == GateInputMode::kLastItem) return embed_item(ctx.last_item());
    return forward(ctx).hidden;
  }

  void backward(const Context& ctx, std::span<const double> d_hidden,
                std::span<const double> d_gate, ExpertGrads& grads) const override {
    const ItemIndex prev = ctx.last_item();
    std::vector<double> dh(d_hidden.begin(), d_hidden.end());
    if (gate_mode_ == GateInputMode::kLastItem) {
      axpy(1.0, d_gate, item_row(grads, prev));
    } else {
      for (std::size_t c = 0; c < dim_; ++c) dh[c] += d_gate[c];
    }
    add_user_grad(grads.blocks[user_emb_], ctx.user, dh);
    auto& gt = grads.blocks[trans_emb_];
    for (std::size_t c = 0; c < dim_; ++c) gt[prev * dim_ + c] += dh[c];
  }

 private:
  std::size_t trans_emb_;
};

// ---------------------------------------------------------------------------
// GRU session encoder: standard update/reset/candidate gates run over the
// current session's item embeddings from a zero initial state. Ignores user
// identity and all sessions before the current one (short-term by Def. 1).
// ---------------------------------------------------------------------------
class GruExpert : public Expert {
 public:
  GruExpert(std::size_t num_items, std::size_t num_users, std::size_t dim,
            std::size_t max_len, GateInputMode mode)
      : Expert(ExpertKind::kGru, num_items, num_users, dim, max_len, mode) {
    w_[0] = add_block("w_update", dim, dim, BlockInit::kUniform);
    w_[1] = add_block("w_reset", dim, dim, BlockInit::kUniform);
    w_[2] = add_block("w_cand", dim, dim, BlockInit::kUniform);
    u_[0] = add_block("u_update", dim, dim, BlockInit::kUniform);
    u_[1] = add_block("u_reset", dim, dim, BlockInit::kUniform);
    u_[2] = add_block("u_cand", dim, dim, BlockInit::kUniform);
    b_[0] = add_block("b_update", dim, 1, BlockInit::kZero);
    b_[1] = add_block("b_reset", dim, 1, BlockInit::kZero);
    b_[2] = add_block("b_cand", dim, 1, BlockInit::kZero);
  }

  ExpertOutput forward(const Context& ctx) const override {
    Trace tr;
    run(ctx, tr);
    ExpertOutput out;
    out.hidden = tr.h.back();
    out.gate_input = embed_item(truncate(ctx.current).back());
    return out;
  }

  void backward(const Context& ctx, std::span<const double> d_hidden,
                std::span<const double> d_gate, ExpertGrads& grads) const override {
    Trace tr;
    run(ctx, tr);
    const auto items = truncate(ctx.current);
    const std::size_t m = items.size();

    // gate input is the last item's embedding under both modes
    axpy(1.0, d_gate, item_grad(grads, items.back()));

    std::vector<double> dh(d_hidden.begin(), d_hidden.end());
    std::vector<double> dz(dim_), dr(dim_), dc(dim_), daz(dim_), dar(dim_), dac(dim_),
        drh(dim_), dprev(dim_), dx(dim_);
    for (std::size_t t = m; t-- > 0;) {
      const auto& hp = tr.h[t];  // h_{t-1}
      const auto& z = tr.z[t];
      const auto& r = tr.r[t];
      const auto& c = tr.c[t];
      for (std::size_t i = 0; i < dim_; ++i) {
        dz[i] = dh[i] * (c[i] - hp[i]);
        dc[i] = dh[i] * z[i];
        daz[i] = dz[i] * z[i] * (1.0 - z[i]);
        dac[i] = dc[i] * (1.0 - c[i] * c[i]);
        dprev[i] = dh[i] * (1.0 - z[i]);
      }
      const auto& x = tr.x[t];
      outer_add(daz, x, grads.blocks[w_[0]]);
      outer_add(dac, x, grads.blocks[w_[2]]);
      // recurrent candidate path: a_c += U_c (r .* h_prev)
      std::vector<double> rh(dim_);
      for (std::size_t i = 0; i < dim_; ++i) rh[i] = r[i] * hp[i];
      outer_add(dac, rh, grads.blocks[u_[2]]);
      std::fill(drh.begin(), drh.end(), 0.0);
      matvec_t_add(blocks_[u_[2]].v, dim_, dim_, dac, drh);
      for (std::size_t i = 0; i < dim_; ++i) {
        dr[i] = drh[i] * hp[i];
        dprev[i] += drh[i] * r[i];
        dar[i] = dr[i] * r[i] * (1.0 - r[i]);
      }
      outer_add(dar, x, grads.blocks[w_[1]]);
      outer_add(daz, hp, grads.blocks[u_[0]]);
      outer_add(dar, hp, grads.blocks[u_[1]]);
      matvec_t_add(blocks_[u_[0]].v, dim_, dim_, daz, dprev);
      matvec_t_add(blocks_[u_[1]].v, dim_, dim_, dar, dprev);
      for (std::size_t i = 0; i < dim_; ++i) {
        grads.blocks[b_[0]][i] += daz[i];
        grads.blocks[b_[1]][i] += dar[i];
        grads.blocks[b_[2]][i] += dac[i];
      }
      std::fill(dx.begin(), dx.end(), 0.0);
      matvec_t_add(blocks_[w_[0]].v, dim_, dim_, daz, dx);
      matvec_t_add(blocks_[w_[1]].v, dim_, dim_, dar, dx);
      matvec_t_add(blocks_[w_[2]].v, dim_, dim_, dac, dx);
      axpy(1.0, dx, item_grad(grads, items[t]));
      dh = dprev;
    }
  }

 private:
  struct Trace {
    std::vector<std::vector<double>> x, z, r, c;
    std::vector<std::vector<double>> h;  // h[0] = zero initial state, h[t] after step t
  };

  void run(const Context& ctx, Trace& tr) const {
    const auto items = truncate(ctx.current);
    if (items.empty()) throw DataError("gru: current session is empty");
    const std::size_t m = items.size();
    tr.h.assign(1, std::vector<double>(dim_, 0.0));
    tr.x.resize(m);
    tr.z.resize(m);
    tr.r.resize(m);
    tr.c.resize(m);
    std::vector<double> az(dim_), ar(dim_), ac(dim_), rh(dim_);
    for (std::size_t t = 0; t < m; ++t) {
      tr.x[t] = embed_item(items[t]);
      const auto& hp = tr.h.back();
      gate_pre(w_[0], u_[0], b_[0], tr.x[t], hp, az);
      gate_pre(w_[1], u_[1], b_[1], tr.x[t], hp, ar);
      tr.z[t].resize(dim_);
      tr.r[t].resize(dim_);
      for (std::size_t i = 0; i < dim_; ++i) {
        tr.z[t][i] = sigmoid(az[i]);
        tr.r[t][i] = sigmoid(ar[i]);
      }
      for (std::size_t i = 0; i < dim_; ++i) rh[i] = tr.r[t][i] * hp[i];
      gate_pre(w_[2], u_[2], b_[2], tr.x[t], rh, ac);
      tr.c[t].resize(dim_);
      std::vector<double> h(dim_);
      for (std::size_t i = 0; i < dim_; ++i) {
        tr.c[t][i] = std::tanh(ac[i]);
        h[i] = (1.0 - tr.z[t][i]) * hp[i] + tr.z[t][i] * tr.c[t][i];
      }
      tr.h.push_back(std::move(h));
    }
  }

  // a = W x + U s + b
  void gate_pre(std::size_t w, std::size_t u, std::size_t b, std::span<const double> x,
                std::span<const double> s, std::vector<double>& a) const {
    a.assign(dim_, 0.0);
    matvec(blocks_[w].v, dim_, dim_, x, a);
    std::vector<double> tmp(dim_);
    matvec(blocks_[u].v, dim_, dim_, s, tmp);
    for (std::size_t i = 0; i < dim_; ++i)
      a[i] += tmp[i] + static_cast<double>(blocks_[b].v[i]);
  }

  std::span<double> item_grad(ExpertGrads& grads, ItemIndex p) const {
    return std::span<double>(grads.blocks[0].data() + p * dim_, dim_);
  }

  std::size_t w_[3], u_[3], b_[3];
};

// ---------------------------------------------------------------------------
// Self-attention session encoder: one causal block, one head, learned
// positional embeddings, residual feed-forward. Short-term by Def. 1.
// ---------------------------------------------------------------------------
class AttnExpert : public Expert {
 public:
  AttnExpert(std::size_t num_items, std::size_t num_users, std::size_t dim,
             std::size_t max_len, GateInputMode mode)
      : Expert(ExpertKind::kAttn, num_items, num_users, dim, max_len, mode) {
    pos_emb_ = add_block("pos_emb", max_len, dim, BlockInit::kUniform);
    wq_ = add_block("w_query", dim, dim, BlockInit::kUniform);
    wk_ = add_block("w_key", dim, dim, BlockInit::kUniform);
    wv_ = add_block("w_value", dim, dim, BlockInit::kUniform);
    ff1_w_ = add_block("ff1_w", dim, dim, BlockInit::kUniform);
    ff1_b_ = add_block("ff1_b", dim, 1, BlockInit::kZero);
    ff2_w_ = add_block("ff2_w", dim, dim, BlockInit::kUniform);
    ff2_b_ = add_block("ff2_b", dim, 1, BlockInit::kZero);
  }

  ExpertOutput forward(const Context& ctx) const override {
    Trace tr;
    run(ctx, tr);
    ExpertOutput out;
    out.hidden = tr.hidden;
    out.gate_input = embed_item(truncate(ctx.current).back());
    return out;
  }

  void backward(const Context& ctx, std::span<const double> d_hidden,
                std::span<const double> d_gate, ExpertGrads& grads) const override {
    Trace tr;
    run(ctx, tr);
    const auto items = truncate(ctx.current);
    const std::size_t m = items.size();
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(dim_));

    axpy(1.0, d_gate, item_grad(grads, items.back()));

    // hidden = u + W2 relu(W1 u + b1) + b2
    std::vector<double> du(d_hidden.begin(), d_hidden.end());
    std::vector<double> df(dim_, 0.0);
    matvec_t_add(blocks_[ff2_w_].v, dim_, dim_, d_hidden, df);
    outer_add(std::span<const double>(d_hidden), tr.f, grads.blocks[ff2_w_]);
    for (std::size_t i = 0; i < dim_; ++i) grads.blocks[ff2_b_][i] += d_hidden[i];
    std::vector<double> dfp(dim_);
    for (std::size_t i = 0; i < dim_; ++i) dfp[i] = tr.f_pre[i] > 0.0 ? df[i] : 0.0;
    outer_add(dfp, tr.u, grads.blocks[ff1_w_]);
    for (std::size_t i = 0; i < dim_; ++i) grads.blocks[ff1_b_][i] += dfp[i];
    matvec_t_add(blocks_[ff1_w_].v, dim_, dim_, dfp, du);

    // u = x_last + a
    std::vector<std::vector<double>> dx(m, std::vector<double>(dim_, 0.0));
    axpy(1.0, du, dx[m - 1]);
    const std::vector<double>& da = du;

    // a = sum_t alpha_t V_t
    std::vector<double> dalpha(m);
    for (std::size_t t = 0; t < m; ++t) {
      dalpha[t] = dot(std::span<const double>(da), tr.v_rows[t]);
    }
    std::vector<double> ds = softmax_backward(tr.alpha, dalpha);
    std::vector<double> dq(dim_, 0.0);
    std::vector<double> dk(dim_);
    for (std::size_t t = 0; t < m; ++t) {
      // dV_t = alpha_t * da
      std::vector<double> dv(dim_);
      for (std::size_t i = 0; i < dim_; ++i) dv[i] = tr.alpha[t] * da[i];
      outer_add(dv, tr.x[t], grads.blocks[wv_]);
      matvec_t_add(blocks_[wv_].v, dim_, dim_, dv, dx[t]);
      // s_t = q . K_t / sqrt(d)
      for (std::size_t i = 0; i < dim_; ++i) {
        dq[i] += ds[t] * tr.k_rows[t][i] * inv_sqrt_d;
        dk[i] = ds[t] * tr.q[i] * inv_sqrt_d;
      }
      outer_add(dk, tr.x[t], grads.blocks[wk_]);
      matvec_t_add(blocks_[wk_].v, dim_, dim_, dk, dx[t]);
    }
    outer_add(dq, tr.x[m - 1], grads.blocks[wq_]);
    matvec_t_add(blocks_[wq_].v, dim_, dim_, dq, dx[m - 1]);

    // x_t = Psi(p_t) + P_t
    for (std::size_t t = 0; t < m; ++t) {
      axpy(1.0, dx[t], item_grad(grads, items[t]));
      auto& gp = grads.blocks[pos_emb_];
      for (std::size_t i = 0; i < dim_; ++i) gp[t * dim_ + i] += dx[t][i];
    }
  }

 private:
  struct Trace {
    std::vector<std::vector<double>> x, k_rows, v_rows;
    std::vector<double> q, alpha, a, u, f_pre, f, hidden;
  };

  void run(const Context& ctx, Trace& tr) const {
    const auto items = truncate(ctx.current);
    if (items.empty()) throw DataError("attn: current session is empty");
    const std::size_t m = items.size();
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(dim_));
    tr.x.resize(m);
    tr.k_rows.resize(m);
    tr.v_rows.resize(m);
    for (std::size_t t = 0; t < m; ++t) {
      tr.x[t] = embed_item(items[t]);
      auto pos = blocks_[pos_emb_].row(t);
      for (std::size_t i = 0; i < dim_; ++i) tr.x[t][i] += static_cast<double>(pos[i]);
      tr.k_rows[t].assign(dim_, 0.0);
      tr.v_rows[t].assign(dim_, 0.0);
      matvec(blocks_[wk_].v, dim_, dim_, tr.x[t], tr.k_rows[t]);
      matvec(blocks_[wv_].v, dim_, dim_, tr.x[t], tr.v_rows[t]);
    }
    tr.q.assign(dim_, 0.0);
    matvec(blocks_[wq_].v, dim_, dim_, tr.x[m - 1], tr.q);
    std::vector<double> s(m);
    for (std::size_t t = 0; t < m; ++t)
      s[t] = dot(std::span<const double>(tr.q), tr.k_rows[t]) * inv_sqrt_d;
    tr.alpha = softmax(s);
    tr.a.assign(dim_, 0.0);
    for (std::size_t t = 0; t < m; ++t) axpy(tr.alpha[t], tr.v_rows[t], tr.a);
    tr.u.resize(dim_);
    for (std::size_t i = 0; i < dim_; ++i) tr.u[i] = tr.x[m - 1][i] + tr.a[i];
    tr.f_pre.assign(dim_, 0.0);
    matvec(blocks_[ff1_w_].v, dim_, dim_, tr.u, tr.f_pre);
    tr.f.resize(dim_);
    for (std::size_t i = 0; i < dim_; ++i) {
      tr.f_pre[i] += static_cast<double>(blocks_[ff1_b_].v[i]);
      tr.f[i] = tr.f_pre[i] > 0.0 ? tr.f_pre[i] : 0.0;
    }
    tr.hidden.assign(dim_, 0.0);
    matvec(blocks_[ff2_w_].v, dim_, dim_, tr.f, tr.hidden);
    for (std::size_t i = 0; i < dim_; ++i)
      tr.hidden[i] += tr.u[i] + static_cast<double>(blocks_[ff2_b_].v[i]);
  }

  std::span<double> item_grad(ExpertGrads& grads, ItemIndex p) const {
    return std::span<double>(grads.blocks[0].data() + p * dim_, dim_);
  }

  std::size_t pos_emb_, wq_, wk_, wv_, ff1_w_, ff1_b_, ff2_w_, ff2_b_;
};

inline std::unique_ptr<Expert> make_expert(ExpertKind kind, std::size_t num_items,
                                           std::size_t num_users, std::size_t dim,
                                           std::size_t max_session_len,
                                           GateInputMode mode) {
  switch (kind) {
    case ExpertKind::kBpr:
      return std::make_unique<BprExpert>(num_items, num_users, dim, max_session_len, mode);
    case ExpertKind::kFpmc:
      return std::make_unique<FpmcExpert>(num_items, num_users, dim, max_session_len, mode);
    case ExpertKind::kGru:
      return std::make_unique<GruExpert>(num_items, num_users, dim, max_session_len, mode);
    case ExpertKind::kAttn:
      return std::make_unique<AttnExpert>(num_items, num_users, dim, max_session_len, mode);
  }
  throw ConfigError("unknown expert kind tag");
}

/// Full-catalog scores from one expert's own parameters (Eq.-level contract:
/// score[p] = hidden . Psi_i(p) + beta_i(p)).
inline std::vector<double> expert_scores(const Expert& expert, const Context& ctx) {
  return expert.scores(expert.forward(ctx).hidden);
}

}  // namespace cove
