#pragma once

#include <vector>

#include "tarmac/core/tensor.hpp"

namespace tarmac {

// One recorded rollout segment across a batch of environments. Rows are agent
// slots flattened as b*N + i. The loss build replays the segment on a
// gradient tape, so only inputs and outcomes are stored, not activations.
template <typename T>
struct Trajectory {
  int batch = 0, n_agents = 0, obs_dim = 0;

  std::vector<T> h0, c0;  // recurrent state entering the segment (constants)

  struct Step {
    std::vector<T> obs;        // [B*N x obs_dim], flattened
    std::vector<T> keep;       // [B*N] 0 where the slot was reset before this step
    std::vector<double> alive; // [B*N] acting mask at decision time
    std::vector<int> actions;  // [B*N]
    std::vector<int> gates;    // [B*N] (all 1 when gating is off)
    std::vector<double> team_reward;  // [B]
    std::vector<char> done;           // [B]
  };
  std::vector<Step> steps;

  std::vector<double> bootstrap_q;  // [B] value estimate past the segment end

  int rows() const { return batch * n_agents; }
};

// y_t = r_t + gamma * Q_{t+1}, zero past terminal steps; the last step
// bootstraps from the recorded estimate.
inline std::vector<std::vector<double>> td_targets(
    const std::vector<std::vector<double>>& rewards, const std::vector<std::vector<char>>& done,
    const std::vector<std::vector<double>>& q_values, const std::vector<double>& bootstrap_q,
    double gamma) {
  const size_t len = rewards.size();
  const size_t batch = len ? rewards[0].size() : 0;
  std::vector<std::vector<double>> y(len, std::vector<double>(batch, 0.0));
  for (size_t t = 0; t < len; ++t)
    for (size_t b = 0; b < batch; ++b) {
      const double next_q = t + 1 < len ? q_values[t + 1][b] : bootstrap_q[b];
      y[t][b] = rewards[t][b] + (done[t][b] ? 0.0 : gamma * next_q);
    }
  return y;
}

}  // namespace tarmac
