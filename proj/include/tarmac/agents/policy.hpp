#pragma once

#include <random>
#include <vector>

#include "tarmac/comm/comm.hpp"
#include "tarmac/nn/layers.hpp"

namespace tarmac {

struct PolicyLayout {
  int obs_dim = 0;
  int enc_dim = 64;
  int hidden = 128;
  int actions = 0;
  CommConfig comm;
};

// Shared-parameter agent policy: observation encoder -> GRU -> heads for
// action logits, message signature/query/value and (optionally) the send
// gate. One instance serves all agents; batches are [rows x feature] with one
// row per agent slot.
template <typename T>
struct PolicyNet {
  PolicyLayout layout;
  Linear<T> encoder;
  GruCell<T> gru;
  Linear<T> action_head;
  Linear<T> signature_head, query_head, value_head;
  Linear<T> gate_head;
  TensorData<T>* round_w = nullptr;

  static PolicyNet create(ParamStore<T>& store, const PolicyLayout& lay) {
    lay.comm.validate();
    PolicyNet net;
    net.layout = lay;
    net.encoder = Linear<T>::create(store, "policy.encoder", lay.obs_dim, lay.enc_dim);
    net.gru = GruCell<T>::create(store, "policy.gru", lay.enc_dim + lay.comm.d_v, lay.hidden);
    // zero-init action head: the initial policy is exactly uniform
    net.action_head = Linear<T>::create(store, "policy.action", lay.hidden, lay.actions, Init::zero);
    net.signature_head = Linear<T>::create(store, "policy.signature", lay.hidden, lay.comm.d_k);
    net.query_head = Linear<T>::create(store, "policy.query", lay.hidden, lay.comm.d_k);
    net.value_head = Linear<T>::create(store, "policy.value", lay.hidden, lay.comm.d_v);
    if (lay.comm.gating)
      net.gate_head = Linear<T>::create(store, "policy.gate", lay.hidden, 1, Init::zero);
    if (lay.comm.rounds > 1)
      net.round_w = store.add("policy.round_w", {lay.comm.d_v + lay.hidden, lay.hidden});
    return net;
  }

  // GRU update: input is [encode(obs) || c_prev].
  Tensor<T> step_hidden(Tape<T>& tape, const Tensor<T>& obs, const Tensor<T>& c_prev,
                        const Tensor<T>& h_prev) const {
    auto enc = tanh_op(encoder.forward(tape, obs));
    return gru.step(tape, concat_cols(enc, c_prev), h_prev);
  }

  CommHeads<T> comm_heads() const {
    return CommHeads<T>{&signature_head, &query_head, &value_head, round_w};
  }
};

template <typename T>
struct PolicyForward {
  Tensor<T> h;
  Tensor<T> action_logits;
  Tensor<T> signatures, queries, values;  // message heads from h
  Tensor<T> gate_logits;                  // valid only with gating
};

// Single-step convenience wrapper used by tests and the miniature loss; the
// trainer drives step_hidden + run_comm_rounds directly.
template <typename T>
PolicyForward<T> policy_forward(Tape<T>& tape, const PolicyNet<T>& net, const Tensor<T>& obs,
                                const Tensor<T>& c_prev, const Tensor<T>& h_prev) {
  PolicyForward<T> out;
  out.h = net.step_hidden(tape, obs, c_prev, h_prev);
  out.action_logits = net.action_head.forward(tape, out.h);
  out.signatures = net.signature_head.forward(tape, out.h);
  out.queries = net.query_head.forward(tape, out.h);
  out.values = net.value_head.forward(tape, out.h);
  if (net.layout.comm.gating) out.gate_logits = net.gate_head.forward(tape, out.h);
  return out;
}

// Inverse-CDF draw from one categorical row.
template <typename T>
int sample_categorical(const T* probs, int n, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng);
  for (int i = 0; i < n; ++i) {
    r -= static_cast<double>(probs[i]);
    if (r <= 0) return i;
  }
  return n - 1;
}

template <typename T>
struct ActionSample {
  int action = 0;
  double log_prob = 0;
  double entropy = 0;
};

template <typename T>
ActionSample<T> sample_action(const std::vector<T>& probs, std::mt19937& rng) {
  ActionSample<T> s;
  s.action = sample_categorical(probs.data(), static_cast<int>(probs.size()), rng);
  s.log_prob = std::log(static_cast<double>(probs[s.action]));
  for (T p : probs)
    if (p > T(0)) s.entropy -= static_cast<double>(p) * std::log(static_cast<double>(p));
  return s;
}

template <typename T>
int argmax_action(const std::vector<T>& probs) {
  int best = 0;
  for (size_t i = 1; i < probs.size(); ++i)
    if (probs[i] > probs[best]) best = static_cast<int>(i);
  return best;
}

}  // namespace tarmac
