#pragma once

#include <memory>
#include <utility>
#include <random>

#include "tarmac/agents/critic.hpp"
#include "tarmac/agents/policy.hpp"
#include "tarmac/envs/env.hpp"
#include "tarmac/train/logging.hpp"
#include "tarmac/train/trajectory.hpp"

namespace tarmac {

// Drives a batch of environments with the shared policy, recording everything
// the loss build needs. Rollouts run with gradients disabled; recurrent state
// is carried as plain values between segments and across episode boundaries
// it is zeroed via per-row keep masks.
template <typename T>
class Rollout {
 public:
  struct EpisodeStat {
    bool success = false;
    int steps = 0;
    double reward = 0;
  };

  Rollout(std::vector<std::unique_ptr<Env>> envs, PolicyNet<T>* net, std::uint64_t seed)
      : envs_(std::move(envs)), net_(net), seed_(seed) {
    batch_ = static_cast<int>(envs_.size());
    n_ = envs_[0]->agent_count();
    obs_dim_ = envs_[0]->obs_dim();
    n_actions_ = envs_[0]->action_count();
    const int rows = batch_ * n_;
    h_.assign(static_cast<size_t>(rows) * net_->layout.hidden, T(0));
    c_.assign(static_cast<size_t>(rows) * net_->layout.comm.d_v, T(0));
    fresh_.assign(rows, true);
    obs_.resize(batch_);
    ep_reward_.assign(batch_, 0.0);
    episode_id_.assign(batch_, 0);
    action_rng_ = make_rng(seed, 0xac);
    gate_rng_ = make_rng(seed, 0x9a);
    boot_rng_ = make_rng(seed, 0xb0);
    for (int b = 0; b < batch_; ++b) {
      episode_id_[b] = next_episode_serial_++;
      obs_[b] = envs_[b]->reset(episode_seed(episode_id_[b]));
    }
  }

  int batch() const { return batch_; }
  int agent_slots() const { return n_; }
  long episodes_done() const { return episodes_done_; }
  std::vector<EpisodeStat> drain_finished() { return std::exchange(finished_, {}); }
  Env& env(int b) { return *envs_[b]; }

  void set_attention_logger(AttentionLogger* logger, int every) {
    attention_logger_ = logger;
    attention_every_ = every;
  }

  // Seed stream for the k-th episode started under a master seed; exposed so
  // replay harnesses can reproduce environment randomness.
  static std::uint64_t episode_seed(std::uint64_t master, long serial) {
    return mix_seed(master, 0xE000 + static_cast<std::uint64_t>(serial));
  }

  // Collects one segment: the critic is only consulted for the bootstrap
  // value past the segment end.
  Trajectory<T> collect(int len, const CriticNet<T>& critic) {
    Trajectory<T> traj;
    traj.batch = batch_;
    traj.n_agents = n_;
    traj.obs_dim = obs_dim_;
    traj.h0 = h_;
    traj.c0 = c_;
    traj.steps.reserve(len);
    for (int t = 0; t < len; ++t) traj.steps.push_back(step_once(t));

    // bootstrap: one value-only look past the segment end, state untouched
    Tape<T> tape;
    tape.set_grad_enabled(false);
    auto [x, keep, alive_mask] = stage_inputs(tape);
    auto h_mask = mul_rowmask(tape.leaf({batch_ * n_, net_->layout.hidden}, h_), keep);
    auto c_mask = mul_rowmask(tape.leaf({batch_ * n_, net_->layout.comm.d_v}, c_), keep);
    auto h_new = net_->step_hidden(tape, x, c_mask, h_mask);
    auto probs = softmax(net_->action_head.forward(tape, h_new), T(1));
    std::vector<int> actions(static_cast<size_t>(batch_) * n_, 0);
    for (int r = 0; r < batch_ * n_; ++r) {
      std::vector<T> row(probs.value().begin() + static_cast<size_t>(r) * n_actions_,
                         probs.value().begin() + static_cast<size_t>(r + 1) * n_actions_);
      actions[r] = sample_action(row, boot_rng_).action;
    }
    auto h_alive = mul_rowmask(h_new, alive_mask);
    auto joint = tape.leaf({batch_, critic.input_width()},
                           build_critic_input(h_alive.value(), actions, batch_, n_,
                                              net_->layout.hidden, n_actions_));
    auto q = critic.forward(tape, joint);
    traj.bootstrap_q.assign(q.value().begin(), q.value().end());
    return traj;
  }

 private:
  std::uint64_t episode_seed(long serial) const { return episode_seed(seed_, serial); }

  // Builds the observation leaf plus keep/alive row masks for this step.
  std::tuple<Tensor<T>, std::vector<T>, std::vector<T>> stage_inputs(Tape<T>& tape) const {
    const int rows = batch_ * n_;
    std::vector<T> xv(static_cast<size_t>(rows) * obs_dim_);
    std::vector<T> keep(rows), alive(rows);
    for (int b = 0; b < batch_; ++b)
      for (int i = 0; i < n_; ++i) {
        const int r = b * n_ + i;
        keep[r] = fresh_[r] ? T(0) : T(1);
        alive[r] = envs_[b]->alive()[i] ? T(1) : T(0);
        const auto& o = obs_[b][i];
        std::copy(o.begin(), o.end(), xv.begin() + static_cast<size_t>(r) * obs_dim_);
      }
    return {tape.leaf({rows, obs_dim_}, std::move(xv)), std::move(keep), std::move(alive)};
  }

  typename Trajectory<T>::Step step_once(int t_in_segment) {
    const int rows = batch_ * n_;
    typename Trajectory<T>::Step sd;
    Tape<T> tape;
    tape.set_grad_enabled(false);

    auto [x, keep, alive_mask] = stage_inputs(tape);
    sd.obs = x.value();
    sd.keep = keep;
    sd.alive.assign(alive_mask.begin(), alive_mask.end());
    std::fill(fresh_.begin(), fresh_.end(), false);

    auto h_prev = mul_rowmask(tape.leaf({rows, net_->layout.hidden}, h_), keep);
    auto c_prev = mul_rowmask(tape.leaf({rows, net_->layout.comm.d_v}, c_), keep);
    auto h_new = net_->step_hidden(tape, x, c_prev, h_prev);
    h_new = mul_rowmask(h_new, sd_alive_as_T(sd));

    // actions
    auto probs = softmax(net_->action_head.forward(tape, h_new), T(1));
    sd.actions.assign(rows, 0);
    for (int r = 0; r < rows; ++r) {
      if (sd.alive[r] == 0.0) continue;
      std::vector<T> row(probs.value().begin() + static_cast<size_t>(r) * n_actions_,
                         probs.value().begin() + static_cast<size_t>(r + 1) * n_actions_);
      sd.actions[r] = sample_action(row, action_rng_).action;
    }

    // gates
    sd.gates.assign(rows, 1);
    if (net_->layout.comm.gating) {
      auto glog = net_->gate_head.forward(tape, h_new);
      for (int r = 0; r < rows; ++r) {
        if (sd.alive[r] == 0.0) {
          sd.gates[r] = 0;
          continue;
        }
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(glog.value()[r])));
        sd.gates[r] = u(gate_rng_) < p ? 1 : 0;
      }
    }

    // communication toward the next timestep
    std::vector<Tensor<T>> c_parts;
    c_parts.reserve(batch_);
    const auto heads = net_->comm_heads();
    for (int b = 0; b < batch_; ++b) {
      auto hb = rows_op(tape, h_new, b);
      std::vector<bool> alive_b(n_);
      std::vector<int> gates_b(n_);
      for (int i = 0; i < n_; ++i) {
        alive_b[i] = sd.alive[b * n_ + i] != 0.0;
        gates_b[i] = sd.gates[b * n_ + i];
      }
      auto res = run_comm_rounds(tape, net_->layout.comm, heads, hb, alive_b, gates_b);
      c_parts.push_back(res.c);
      maybe_log_attention(b, t_in_segment, res, alive_b, gates_b, probs);
    }
    auto c_new = mul_rowmask(concat_rows(c_parts), sd_alive_as_T(sd));

    // environment transition
    sd.team_reward.assign(batch_, 0.0);
    sd.done.assign(batch_, 0);
    for (int b = 0; b < batch_; ++b) {
      std::vector<int> actions_b(sd.actions.begin() + static_cast<size_t>(b) * n_,
                                 sd.actions.begin() + static_cast<size_t>(b + 1) * n_);
      EnvStep out = envs_[b]->step(actions_b);
      sd.team_reward[b] = out.team_reward;
      sd.done[b] = out.done ? 1 : 0;
      ep_reward_[b] += out.team_reward;
      obs_[b] = std::move(out.obs);
      if (out.done) {
        finished_.push_back({envs_[b]->episode_success(), envs_[b]->episode_steps(),
                             ep_reward_[b]});
        ++episodes_done_;
        ep_reward_[b] = 0.0;
        episode_id_[b] = next_episode_serial_++;
        obs_[b] = envs_[b]->reset(episode_seed(episode_id_[b]));
        for (int i = 0; i < n_; ++i) fresh_[b * n_ + i] = true;
      } else {
        for (int i = 0; i < n_; ++i)
          if (envs_[b]->fresh()[i]) fresh_[b * n_ + i] = true;
      }
    }

    h_ = h_new.value();
    c_ = c_new.value();
    return sd;
  }

  static std::vector<T> sd_alive_as_T(const typename Trajectory<T>::Step& sd) {
    return std::vector<T>(sd.alive.begin(), sd.alive.end());
  }

  Tensor<T> rows_op(Tape<T>& tape, const Tensor<T>& m, int b) const {
    return rows(m, b * n_, (b + 1) * n_);
  }

  void maybe_log_attention(int b, int t, const CommResult<T>& res,
                           const std::vector<bool>& alive_b, const std::vector<int>& gates_b,
                           const Tensor<T>& probs) {
    if (!attention_logger_ || b != 0 || attention_every_ <= 0) return;
    if (episode_id_[b] % attention_every_ != 0) return;
    const auto positions = envs_[b]->agent_positions();
    for (size_t round = 0; round < res.round_weights.size(); ++round) {
      const auto& w = res.round_weights[round];
      for (int j = 0; j < n_; ++j) {
        if (!alive_b[j]) continue;
        std::vector<double> row(n_);
        double sum = 0;
        for (int i = 0; i < n_; ++i) {
          row[i] = static_cast<double>(w[static_cast<size_t>(j) * n_ + i]);
          sum += row[i];
        }
        if (sum < 0.5) continue;  // no allowed sender (all gated off)
        const double p_brake =
            n_actions_ > 1 ? static_cast<double>(probs.at(b * n_ + j, 1)) : 0.0;
        attention_logger_->log(episode_id_[b], envs_[b]->episode_steps(), static_cast<int>(round),
                               j, row, gates_b, alive_b, positions, p_brake);
      }
    }
    (void)t;
  }

  std::vector<std::unique_ptr<Env>> envs_;
  PolicyNet<T>* net_;
  std::uint64_t seed_;
  int batch_ = 0, n_ = 0, obs_dim_ = 0, n_actions_ = 0;
  std::vector<T> h_, c_;
  std::vector<bool> fresh_;
  std::vector<std::vector<std::vector<double>>> obs_;  // per env, per slot
  std::vector<double> ep_reward_;
  std::vector<long> episode_id_;
  long next_episode_serial_ = 0;
  long episodes_done_ = 0;
  std::vector<EpisodeStat> finished_;
  std::mt19937 action_rng_, gate_rng_, boot_rng_;
  AttentionLogger* attention_logger_ = nullptr;
  int attention_every_ = 0;
};

// Fully decentralized evaluation: local observations, carried hidden state and
// received messages only. No critic is constructed or consulted.
struct EvalSummary {
  int episodes = 0;
  double success_rate = 0, success_se = 0, mean_steps = 0, mean_reward = 0;
};

template <typename T>
EvalSummary evaluate(const PolicyNet<T>& net, Env& env, int episodes, std::uint64_t seed,
                     bool greedy = false, AttentionLogger* alog = nullptr, int alog_every = 1,
                     TraceLogger* trace = nullptr) {
  const int n = env.agent_count();
  const int n_actions = env.action_count();
  std::mt19937 rng = make_rng(seed, 0xe7a);
  EvalSummary sum;
  int successes = 0;
  double steps_total = 0, reward_total = 0;
  const auto heads = net.comm_heads();

  for (int ep = 0; ep < episodes; ++ep) {
    auto obs = env.reset(mix_seed(seed, 0xE0000 + static_cast<std::uint64_t>(ep)));
    std::vector<T> h(static_cast<size_t>(n) * net.layout.hidden, T(0));
    std::vector<T> c(static_cast<size_t>(n) * net.layout.comm.d_v, T(0));
    std::vector<bool> fresh(n, false);
    double ep_reward = 0;
    bool done = false;
    int t = 0;
    while (!done) {
      Tape<T> tape;
      tape.set_grad_enabled(false);
      std::vector<T> xv(static_cast<size_t>(n) * env.obs_dim());
      std::vector<T> keep(n, T(1)), alive_mask(n);
      for (int i = 0; i < n; ++i) {
        std::copy(obs[i].begin(), obs[i].end(), xv.begin() + static_cast<size_t>(i) * env.obs_dim());
        if (fresh[i]) keep[i] = T(0);
        alive_mask[i] = env.alive()[i] ? T(1) : T(0);
      }
      auto h_prev = mul_rowmask(tape.leaf({n, net.layout.hidden}, h), keep);
      auto c_prev = mul_rowmask(tape.leaf({n, net.layout.comm.d_v}, c), keep);
      auto h_new = net.step_hidden(tape, tape.leaf({n, env.obs_dim()}, xv), c_prev, h_prev);
      h_new = mul_rowmask(h_new, alive_mask);
      auto probs = softmax(net.action_head.forward(tape, h_new), T(1));

      std::vector<int> actions(n, 0);
      for (int i = 0; i < n; ++i) {
        if (alive_mask[i] == T(0)) continue;
        std::vector<T> row(probs.value().begin() + static_cast<size_t>(i) * n_actions,
                           probs.value().begin() + static_cast<size_t>(i + 1) * n_actions);
        actions[i] = greedy ? argmax_action(row) : sample_action(row, rng).action;
      }

      std::vector<int> gates(n, 1);
      if (net.layout.comm.gating) {
        auto glog = net.gate_head.forward(tape, h_new);
        for (int i = 0; i < n; ++i)
          gates[i] = (alive_mask[i] != T(0) && glog.value()[i] > T(0)) ? 1 : 0;
      }

      std::vector<bool> alive_b(n);
      for (int i = 0; i < n; ++i) alive_b[i] = alive_mask[i] != T(0);
      auto res = run_comm_rounds(tape, net.layout.comm, heads, h_new, alive_b, gates);
      auto c_new = mul_rowmask(res.c, alive_mask);

      if (alog && ep % std::max(1, alog_every) == 0) {
        const auto positions = env.agent_positions();
        for (size_t round = 0; round < res.round_weights.size(); ++round)
          for (int j = 0; j < n; ++j) {
            if (!alive_b[j]) continue;
            std::vector<double> row(n);
            double s = 0;
            for (int i = 0; i < n; ++i) {
              row[i] = static_cast<double>(res.round_weights[round][static_cast<size_t>(j) * n + i]);
              s += row[i];
            }
            if (s < 0.5) continue;
            const double p_brake = n_actions > 1 ? static_cast<double>(probs.at(j, 1)) : 0.0;
            alog->log(ep, t, static_cast<int>(round), j, row, gates, alive_b, positions, p_brake);
          }
      }

      EnvStep out = env.step(actions);
      if (trace)
        trace->log(ep, t, env.agent_positions(), actions, out.rewards, out.team_reward,
                   env.alive(), out.done);
      ep_reward += out.team_reward;
      obs = std::move(out.obs);
      h = h_new.value();
      c = c_new.value();
      for (int i = 0; i < n; ++i) fresh[i] = env.fresh()[i];
      done = out.done;
      ++t;
    }
    successes += env.episode_success() ? 1 : 0;
    steps_total += env.episode_steps();
    reward_total += ep_reward;
  }

  sum.episodes = episodes;
  sum.success_rate = episodes ? static_cast<double>(successes) / episodes : 0.0;
  sum.success_se = episodes ? std::sqrt(sum.success_rate * (1 - sum.success_rate) / episodes) : 0.0;
  sum.mean_steps = episodes ? steps_total / episodes : 0.0;
  sum.mean_reward = episodes ? reward_total / episodes : 0.0;
  return sum;
}

}  // namespace tarmac
