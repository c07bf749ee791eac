#pragma once

#include <random>

#include "tarmac/core/rng.hpp"
#include "tarmac/envs/env.hpp"

namespace tarmac {

// Predators with limited vision search for a stationary prey. Each predator
// pays -0.05 per step until it reaches the prey cell, then earns +0.05 per
// step for the rest of the episode. The episode ends when every predator has
// reached the prey or the step limit runs out.

struct PreyConfig {
  int grid = 5;
  int n_agents = 3;
  int vision = 0;
  int horizon = 20;
};

class PreyEnv final : public Env {
 public:
  static constexpr double kRExplore = -0.05;
  static constexpr double kRPrey = 0.05;

  explicit PreyEnv(PreyConfig cfg) : cfg_(cfg) {
    alive_.assign(cfg_.n_agents, true);
    fresh_.assign(cfg_.n_agents, true);
  }

  std::string name() const override { return "predator-prey"; }
  int agent_count() const override { return cfg_.n_agents; }
  int action_count() const override { return 5; }  // up down left right stay
  int obs_dim() const override {
    const int w = 2 * cfg_.vision + 1;
    return w * w * 2 + 3;
  }
  int grid_size() const override { return cfg_.grid; }
  int horizon() const override { return cfg_.horizon; }

  std::vector<std::vector<double>> reset(std::uint64_t seed) override {
    rng_ = make_rng(seed, 0xbeef);
    std::uniform_int_distribution<int> cell(0, cfg_.grid - 1);
    prey_ = {cell(rng_), cell(rng_)};
    pos_.assign(cfg_.n_agents, {0, 0});
    reached_.assign(cfg_.n_agents, false);
    for (int i = 0; i < cfg_.n_agents; ++i) {
      pos_[i] = {cell(rng_), cell(rng_)};
      reached_[i] = pos_[i] == prey_;
    }
    steps_ = 0;
    done_ = false;
    std::fill(fresh_.begin(), fresh_.end(), true);
    return observe_all();
  }

  EnvStep step(const std::vector<int>& actions) override {
    static constexpr int dr[5] = {-1, 1, 0, 0, 0};
    static constexpr int dc[5] = {0, 0, -1, 1, 0};
    EnvStep out;
    out.rewards.assign(cfg_.n_agents, 0.0);
    for (int i = 0; i < cfg_.n_agents; ++i) {
      const int a = actions[i];
      pos_[i] = {std::clamp(pos_[i][0] + dr[a], 0, cfg_.grid - 1),
                 std::clamp(pos_[i][1] + dc[a], 0, cfg_.grid - 1)};
      if (pos_[i] == prey_) reached_[i] = true;  // monotone within the episode
      out.rewards[i] = reached_[i] ? kRPrey : kRExplore;
      out.team_reward += out.rewards[i];
    }
    ++steps_;
    bool all = true;
    for (bool r : reached_) all = all && r;
    done_ = all || steps_ >= cfg_.horizon;
    out.done = done_;
    out.obs = observe_all();
    std::fill(fresh_.begin(), fresh_.end(), false);
    return out;
  }

  const std::vector<bool>& alive() const override { return alive_; }
  const std::vector<bool>& fresh() const override { return fresh_; }
  std::vector<std::array<int, 2>> agent_positions() const override { return pos_; }
  int episode_steps() const override { return steps_; }
  bool episode_success() const override {
    for (bool r : reached_)
      if (!r) return false;
    return true;
  }

  nlohmann::json config_json() const override {
    return {{"name", name()},
            {"grid", cfg_.grid},
            {"agents", cfg_.n_agents},
            {"vision", cfg_.vision},
            {"horizon", cfg_.horizon}};
  }

  // introspection for tests
  std::array<int, 2> prey_position() const { return prey_; }
  bool reached(int i) const { return reached_[i]; }
  void teleport(int i, int r, int c) {  // test support
    pos_[i] = {r, c};
    if (pos_[i] == prey_) reached_[i] = true;
  }

 private:
  std::vector<std::vector<double>> observe_all() const {
    std::vector<std::vector<double>> obs(cfg_.n_agents);
    const int w = 2 * cfg_.vision + 1;
    for (int i = 0; i < cfg_.n_agents; ++i) {
      obs[i].assign(obs_dim(), 0.0);
      size_t k = 0;
      for (int dr = -cfg_.vision; dr <= cfg_.vision; ++dr)
        for (int dc = -cfg_.vision; dc <= cfg_.vision; ++dc) {
          const std::array<int, 2> cell{pos_[i][0] + dr, pos_[i][1] + dc};
          if (cell[0] >= 0 && cell[0] < cfg_.grid && cell[1] >= 0 && cell[1] < cfg_.grid) {
            if (cell == prey_) obs[i][k] = 1.0;
            for (int j = 0; j < cfg_.n_agents; ++j)
              if (j != i && pos_[j] == cell) obs[i][k + 1] = 1.0;
          }
          k += 2;
        }
      obs[i][k++] = static_cast<double>(pos_[i][0]) / cfg_.grid;
      obs[i][k++] = static_cast<double>(pos_[i][1]) / cfg_.grid;
      obs[i][k] = reached_[i] ? 1.0 : 0.0;
      (void)w;
    }
    return obs;
  }

  PreyConfig cfg_;
  std::mt19937 rng_;
  std::array<int, 2> prey_{0, 0};
  std::vector<std::array<int, 2>> pos_;
  std::vector<bool> reached_;
  std::vector<bool> alive_, fresh_;
  int steps_ = 0;
  bool done_ = false;
};

}  // namespace tarmac
