#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "tarmac/core/ops.hpp"
#include "tarmac/nn/layers.hpp"

// Targeted communication: each agent broadcasts a message [signature || value];
// receivers score signatures against a query by scaled dot product, softmax the
// scores into attention weights, and aggregate message values. Multi-round
// exchanges update a working hidden state between rounds. Hard gating masks an
// agent out as a sender while it keeps receiving.

namespace tarmac {

enum class CommMode { targeted, mean_pool, none };

inline std::string to_string(CommMode m) {
  switch (m) {
    case CommMode::targeted: return "targeted";
    case CommMode::mean_pool: return "mean";
    default: return "none";
  }
}

inline CommMode comm_mode_from(const std::string& s) {
  if (s == "targeted") return CommMode::targeted;
  if (s == "mean" || s == "mean_pool") return CommMode::mean_pool;
  if (s == "none") return CommMode::none;
  throw TensorError("unknown comm mode: " + s);
}

struct CommConfig {
  int d_k = 16;
  int d_v = 32;
  int rounds = 1;
  CommMode mode = CommMode::targeted;
  bool gating = false;
  bool self_attention = true;

  void validate() const {
    if (d_k < 1 || d_v < 1) throw TensorError("comm dims must be >= 1");
    if (rounds < 1) throw TensorError("rounds must be >= 1");
    if (gating && mode == CommMode::none)
      throw TensorError("gating requires communication (mode != none)");
  }
};

inline constexpr double kMaskLogit = -1e9;

// Attention row for one receiver: softmax over unmasked senders of
// (q . k_i) / sqrt(d_k). Masked senders come out exactly zero. self_index is
// the receiver's own slot (< 0 if it is not among the senders).
template <typename T>
Tensor<T> attention_weights(const Tensor<T>& query, const Tensor<T>& signatures,
                            const std::vector<bool>& alive, int self_index = -1,
                            bool self_attention = true) {
  const int n = signatures.rows();
  const int dk = signatures.cols();
  if (query.size() != dk)
    throw TensorError("attention_weights: query width " + std::to_string(query.size()) +
                      " vs d_k " + std::to_string(dk));
  if (static_cast<int>(alive.size()) != n)
    throw TensorError("attention_weights: mask size mismatch");
  std::vector<T> mask(n, T(0));
  bool any = false;
  for (int i = 0; i < n; ++i) {
    const bool allowed = alive[i] && (self_attention || i != self_index);
    if (!allowed) mask[i] = static_cast<T>(kMaskLogit);
    any = any || allowed;
  }
  if (!any) throw TensorError("attention_weights: all senders masked");
  auto scores = matmul_nt(query, signatures);  // [1 x n]
  return softmax(add_rowvec_const(scores, mask), T(1) / std::sqrt(static_cast<T>(dk)));
}

// c_j = sum_i alpha_ji v_i.
template <typename T>
Tensor<T> aggregate(const Tensor<T>& alpha, const Tensor<T>& values) {
  return matmul(alpha, values);
}

// Unweighted mean over unmasked senders; every receiver gets the same vector.
// Zero unmasked senders yields the zero vector.
template <typename T>
Tensor<T> mean_pool(Tape<T>& tape, const Tensor<T>& values, const std::vector<bool>& alive) {
  const int n = values.rows();
  if (static_cast<int>(alive.size()) != n) throw TensorError("mean_pool: mask size mismatch");
  int count = 0;
  for (bool a : alive) count += a ? 1 : 0;
  std::vector<T> w(n, T(0));
  if (count > 0)
    for (int i = 0; i < n; ++i)
      if (alive[i]) w[i] = T(1) / static_cast<T>(count);
  return matmul(tape.leaf({1, n}, w), values);
}

// h' = tanh(W [c || h]); re-runs of the signature/query/value heads on h'
// implement the next communication round.
template <typename T>
Tensor<T> multi_round_update(Tape<T>& tape, const Tensor<T>& c, const Tensor<T>& h,
                             TensorData<T>* w) {
  return tanh_op(matmul(concat_cols(c, h), tape.adopt(w)));
}

// Hard gating decisions from per-agent logits. Training samples from
// Bernoulli(sigmoid(logit)); evaluation thresholds at 0.5. The log-probability
// of the sampled bits is recorded on the tape by the loss build, not here.
inline std::vector<int> gate_messages(const std::vector<double>& logits, bool train_sample,
                                      std::mt19937* rng) {
  std::vector<int> bits(logits.size(), 0);
  for (size_t i = 0; i < logits.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-logits[i]));
    if (train_sample) {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      bits[i] = (u(*rng) < p) ? 1 : 0;
    } else {
      bits[i] = p > 0.5 ? 1 : 0;
    }
  }
  return bits;
}

template <typename T>
struct CommHeads {
  const Linear<T>* signature = nullptr;
  const Linear<T>* query = nullptr;
  const Linear<T>* value = nullptr;
  TensorData<T>* round_w = nullptr;  // [d_v+hid x hid], required when rounds > 1
};

template <typename T>
struct CommResult {
  Tensor<T> c;  // [n x d_v] final aggregated message per receiver
  // weights per round, row-major [n x n]; receiver-major rows
  std::vector<std::vector<T>> round_weights;
};

// One timestep of communication among the n agents of a single environment:
// rounds of Eq. 1-3 message exchange linked by the Eq. 4 state update. The
// sender mask is alive AND gate; every agent still receives.
template <typename T>
CommResult<T> run_comm_rounds(Tape<T>& tape, const CommConfig& cfg, const CommHeads<T>& heads,
                              const Tensor<T>& hidden, const std::vector<bool>& alive,
                              const std::vector<int>& gates) {
  const int n = hidden.rows();
  CommResult<T> out;

  if (cfg.mode == CommMode::none) {
    out.c = tape.zeros({n, cfg.d_v});
    return out;
  }

  std::vector<bool> sender(n);
  int sender_count = 0;
  for (int i = 0; i < n; ++i) {
    sender[i] = alive[i] && (!cfg.gating || gates[i] == 1);
    sender_count += sender[i] ? 1 : 0;
  }

  Tensor<T> working = hidden;
  for (int round = 0; round < cfg.rounds; ++round) {
    Tensor<T> c;
    std::vector<T> weights(static_cast<size_t>(n) * n, T(0));
    if (sender_count == 0) {
      c = tape.zeros({n, cfg.d_v});
    } else if (cfg.mode == CommMode::mean_pool) {
      auto values = heads.value->forward(tape, working);
      auto pooled = mean_pool(tape, values, sender);  // [1 x d_v]
      c = matmul(tape.leaf({n, 1}, std::vector<T>(n, T(1))), pooled);
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
          if (sender[i]) weights[static_cast<size_t>(j) * n + i] = T(1) / static_cast<T>(sender_count);
    } else {
      auto signatures = heads.signature->forward(tape, working);
      auto queries = heads.query->forward(tape, working);
      auto values = heads.value->forward(tape, working);
      auto scores = matmul_nt(queries, signatures);  // [n x n]

      std::vector<T> mask(static_cast<size_t>(n) * n, T(0));
      std::vector<T> row_ok(n, T(0));
      for (int j = 0; j < n; ++j) {
        bool any = false;
        for (int i = 0; i < n; ++i) {
          const bool allowed = sender[i] && (cfg.self_attention || i != j);
          if (!allowed) mask[static_cast<size_t>(j) * n + i] = static_cast<T>(kMaskLogit);
          any = any || allowed;
        }
        row_ok[j] = any ? T(1) : T(0);
      }
      auto alpha = softmax(add_const(scores, mask), T(1) / std::sqrt(static_cast<T>(cfg.d_k)));
      // receivers with no allowed sender get an exactly-zero row
      alpha = mul_rowmask(alpha, row_ok);
      c = aggregate(alpha, values);
      weights = alpha.value();
    }
    out.round_weights.push_back(std::move(weights));
    out.c = c;
    if (round + 1 < cfg.rounds) {
      if (!heads.round_w) throw TensorError("rounds > 1 requires a round-update matrix");
      working = multi_round_update(tape, c, working, heads.round_w);
    }
  }
  return out;
}

}  // namespace tarmac
