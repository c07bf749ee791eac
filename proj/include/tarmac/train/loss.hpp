#pragma once

#include <optional>

#include "tarmac/agents/critic.hpp"
#include "tarmac/agents/policy.hpp"
#include "tarmac/train/config.hpp"
#include "tarmac/train/trajectory.hpp"

namespace tarmac {

// Signals the loss treats as constants: critic values used to weight the
// policy-gradient terms, TD targets for the critic regression, and the
// detached hidden states fed to the critic. In production they are derived
// from the same build; gradient checks freeze them explicitly so the loss is
// a clean function of the parameters.
struct LossSignals {
  std::vector<std::vector<double>> q_values;       // per t: [B]
  std::vector<std::vector<double>> targets;        // per t: [B]
  std::vector<std::vector<double>> critic_inputs;  // per t: [B x input_width] flat
};

template <typename T>
struct LossBuild {
  Tensor<T> total;
  Tensor<T> actor_tensor, critic_tensor;  // separable for isolation checks
  double actor = 0, critic = 0, entropy = 0;  // reported scalar values
  LossSignals signals;
};

// Replays a recorded segment on the tape: policy terms get gradients through
// the full recurrent/communication graph, the critic sees detached hidden
// states, and actor weights/targets enter as constants.
template <typename T>
LossBuild<T> build_losses(Tape<T>& tape, const PolicyNet<T>& net, const CriticNet<T>& critic,
                          const Trajectory<T>& traj, const TrainConfig& cfg,
                          const LossSignals* frozen = nullptr) {
  const int n_rows = traj.rows();
  const int len = static_cast<int>(traj.steps.size());
  const int n_actions = net.layout.actions;
  const auto heads = net.comm_heads();

  auto h = tape.leaf({n_rows, net.layout.hidden}, traj.h0);
  auto c = tape.leaf({n_rows, net.layout.comm.d_v}, traj.c0);

  std::vector<Tensor<T>> q_tensors, logp_terms, entropy_terms;
  std::vector<std::vector<double>> rewards(len), q_values(len), critic_inputs;
  std::vector<std::vector<char>> dones(len);
  double alive_total = 0;

  for (int t = 0; t < len; ++t) {
    const auto& sd = traj.steps[t];
    const std::vector<T> alive_t(sd.alive.begin(), sd.alive.end());
    h = mul_rowmask(h, sd.keep);
    c = mul_rowmask(c, sd.keep);
    auto x = tape.leaf({n_rows, traj.obs_dim}, sd.obs);
    h = net.step_hidden(tape, x, c, h);
    h = mul_rowmask(h, alive_t);

    auto logits = net.action_head.forward(tape, h);
    auto logp_all = log_softmax(logits);
    auto logp = gather_cols(logp_all, sd.actions);  // [rows x 1]
    if (net.layout.comm.gating) {
      auto glp = bernoulli_log_prob(net.gate_head.forward(tape, h), sd.gates);
      logp = add(logp, glp);
    }
    logp_terms.push_back(logp);
    auto p = exp_op(logp_all);
    entropy_terms.push_back(neg(row_sum(mul(p, logp_all))));

    std::vector<T> joint_flat;
    if (frozen && !frozen->critic_inputs.empty()) {
      joint_flat.assign(frozen->critic_inputs[t].begin(), frozen->critic_inputs[t].end());
    } else {
      joint_flat = build_critic_input(h.value(), sd.actions, traj.batch, traj.n_agents,
                                      net.layout.hidden, n_actions);
    }
    critic_inputs.emplace_back(joint_flat.begin(), joint_flat.end());
    auto joint = tape.leaf({traj.batch, critic.input_width()}, std::move(joint_flat));
    q_tensors.push_back(critic.forward(tape, joint));
    q_values[t].assign(q_tensors[t].value().begin(), q_tensors[t].value().end());

    std::vector<Tensor<T>> c_parts;
    for (int b = 0; b < traj.batch; ++b) {
      auto hb = rows(h, b * traj.n_agents, (b + 1) * traj.n_agents);
      std::vector<bool> alive_b(traj.n_agents);
      std::vector<int> gates_b(traj.n_agents);
      for (int i = 0; i < traj.n_agents; ++i) {
        alive_b[i] = sd.alive[static_cast<size_t>(b) * traj.n_agents + i] != 0.0;
        gates_b[i] = sd.gates[static_cast<size_t>(b) * traj.n_agents + i];
      }
      c_parts.push_back(run_comm_rounds(tape, net.layout.comm, heads, hb, alive_b, gates_b).c);
    }
    c = mul_rowmask(concat_rows(c_parts), alive_t);

    rewards[t] = sd.team_reward;
    dones[t] = sd.done;
    for (double a : sd.alive) alive_total += a;
  }

  LossBuild<T> out;
  out.signals.q_values = frozen ? frozen->q_values : q_values;
  out.signals.targets = frozen ? frozen->targets
                               : td_targets(rewards, dones, q_values, traj.bootstrap_q, cfg.gamma);
  out.signals.critic_inputs = std::move(critic_inputs);
  const double denom = std::max(1.0, alive_total);

  // actor: -(mean over alive agent-steps of logpi * weight) - beta * entropy
  std::vector<std::vector<T>> weights(len);
  {
    double wsum = 0, wsq = 0;
    for (int t = 0; t < len; ++t) {
      const auto& sd = traj.steps[t];
      weights[t].resize(n_rows);
      for (int r = 0; r < n_rows; ++r) {
        const int b = r / traj.n_agents;
        const double weight = cfg.advantage_actor
                                  ? out.signals.targets[t][b] - out.signals.q_values[t][b]
                                  : out.signals.q_values[t][b];
        weights[t][r] = static_cast<T>(sd.alive[r] * weight);
        wsum += sd.alive[r] * weight;
        wsq += sd.alive[r] * weight * weight;
      }
    }
    if (cfg.normalize_advantage) {
      const double mean_w = wsum / denom;
      const double var_w = std::max(0.0, wsq / denom - mean_w * mean_w);
      const double inv_std = 1.0 / std::max(1e-6, std::sqrt(var_w));
      for (int t = 0; t < len; ++t)
        for (int r = 0; r < n_rows; ++r)
          if (traj.steps[t].alive[r] != 0.0)
            weights[t][r] = static_cast<T>((weights[t][r] - mean_w) * inv_std);
    }
  }
  std::vector<Tensor<T>> actor_parts, ent_parts;
  for (int t = 0; t < len; ++t) {
    const auto& sd = traj.steps[t];
    std::vector<T> am(n_rows);
    for (int r = 0; r < n_rows; ++r) am[r] = static_cast<T>(sd.alive[r]);
    actor_parts.push_back(mul_const(logp_terms[t], weights[t]));
    ent_parts.push_back(mul_const(entropy_terms[t], am));
  }
  auto actor_pg = scale(sum(concat_rows(actor_parts)), static_cast<T>(-1.0 / denom));
  auto ent_mean = scale(sum(concat_rows(ent_parts)), static_cast<T>(1.0 / denom));
  auto actor_loss = sub(actor_pg, scale(ent_mean, static_cast<T>(cfg.entropy_coef)));

  // critic: mean squared TD error with constant targets
  std::vector<Tensor<T>> critic_parts;
  for (int t = 0; t < len; ++t) {
    std::vector<T> y(traj.batch);
    for (int b = 0; b < traj.batch; ++b) y[b] = static_cast<T>(out.signals.targets[t][b]);
    auto diff = sub(q_tensors[t], tape.leaf({traj.batch, 1}, y));
    critic_parts.push_back(mul(diff, diff));
  }
  auto critic_loss =
      scale(sum(concat_rows(critic_parts)), static_cast<T>(1.0 / (traj.batch * len)));

  out.total = add(actor_loss, scale(critic_loss, static_cast<T>(cfg.value_loss_coef)));
  out.actor_tensor = actor_loss;
  out.critic_tensor = critic_loss;
  out.actor = static_cast<double>(actor_loss.item());
  out.critic = static_cast<double>(critic_loss.item());
  out.entropy = static_cast<double>(ent_mean.item());
  return out;
}

}  // namespace tarmac
