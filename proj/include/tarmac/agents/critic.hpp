#pragma once

#include <vector>

#include "tarmac/nn/layers.hpp"

namespace tarmac {

// Centralized joint action-value estimator: consumes every agent's hidden
// state and one-hot action, emits one scalar per batch row. Training-only;
// forward_calls instruments the decentralized-execution guarantee (evaluation
// must never touch it).
template <typename T>
struct CriticNet {
  int n_agents = 0, agent_hidden = 0, actions = 0, width = 128;
  Linear<T> l1, l2;
  mutable long forward_calls = 0;

  static CriticNet create(ParamStore<T>& store, int n_agents, int agent_hidden, int actions,
                          int width = 128) {
    CriticNet c;
    c.n_agents = n_agents;
    c.agent_hidden = agent_hidden;
    c.actions = actions;
    c.width = width;
    const int in = n_agents * (agent_hidden + actions);
    c.l1 = Linear<T>::create(store, "critic.l1", in, width);
    // zero-init output: the critic starts at exactly Q = 0
    c.l2 = Linear<T>::create(store, "critic.l2", width, 1, Init::zero);
    return c;
  }

  int input_width() const { return n_agents * (agent_hidden + actions); }

  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& joint) const {
    if (joint.cols() != input_width())
      throw TensorError("critic: expected input width " + std::to_string(input_width()) +
                        ", got " + std::to_string(joint.cols()));
    ++forward_calls;
    return l2.forward(tape, tanh_op(l1.forward(tape, joint)));
  }
};

// Packs per-agent hidden values [B*N x hid] plus actions into the critic's
// joint rows [B x N*(hid+A)]. Input values are treated as constants: the
// critic never backpropagates into the policy.
template <typename T>
std::vector<T> build_critic_input(const std::vector<T>& h_values, const std::vector<int>& actions,
                                  int batch, int n_agents, int hidden, int n_actions) {
  const int per_agent = hidden + n_actions;
  std::vector<T> joint(static_cast<size_t>(batch) * n_agents * per_agent, T(0));
  for (int b = 0; b < batch; ++b)
    for (int i = 0; i < n_agents; ++i) {
      const size_t src = (static_cast<size_t>(b) * n_agents + i) * hidden;
      const size_t dst = static_cast<size_t>(b) * n_agents * per_agent +
                         static_cast<size_t>(i) * per_agent;
      for (int j = 0; j < hidden; ++j) joint[dst + j] = h_values[src + j];
      joint[dst + hidden + actions[static_cast<size_t>(b) * n_agents + i]] = T(1);
    }
  return joint;
}

}  // namespace tarmac
