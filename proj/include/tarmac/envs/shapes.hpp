#pragma once

#include <optional>
#include <random>
#include <stdexcept>

#include "tarmac/core/rng.hpp"
#include "tarmac/envs/env.hpp"

namespace tarmac {

// Cooperative navigation over a procedurally generated grid of colored
// shapes. Each agent sees a 5x5 patch plus its own coordinates and must park
// on a cell matching its goal attributes; reward each step is the on-goal
// fraction of the team.

enum : int { kShapeCircle = 0, kShapeSquare = 1, kShapeTriangle = 2 };
enum : int { kColorRed = 0, kColorGreen = 1, kColorBlue = 2 };
enum : int { kSizeSmall = 0, kSizeBig = 1 };

struct GoalSpec {
  int shape = -1;  // -1 = unconstrained
  int color = -1;
  int size = -1;
};

// Parses goal descriptions like "red" or "small green circle".
inline GoalSpec parse_goal(const std::string& text) {
  GoalSpec g;
  std::string token;
  auto apply = [&g](const std::string& t) {
    if (t.empty()) return;
    if (t == "circle") g.shape = kShapeCircle;
    else if (t == "square") g.shape = kShapeSquare;
    else if (t == "triangle") g.shape = kShapeTriangle;
    else if (t == "red") g.color = kColorRed;
    else if (t == "green") g.color = kColorGreen;
    else if (t == "blue") g.color = kColorBlue;
    else if (t == "small") g.size = kSizeSmall;
    else if (t == "big") g.size = kSizeBig;
    else throw std::invalid_argument("unknown goal attribute: " + t);
  };
  for (char ch : text) {
    if (ch == ' ') {
      apply(token);
      token.clear();
    } else {
      token += ch;
    }
  }
  apply(token);
  if (g.shape < 0 && g.color < 0 && g.size < 0)
    throw std::invalid_argument("empty goal spec: " + text);
  return g;
}

struct ShapesConfig {
  int grid = 30;
  int n_agents = 4;
  int horizon = 60;
  double cell_prob = 0.2;
  std::vector<GoalSpec> goals;  // one per agent, or a single broadcast entry
};

class ShapesEnv final : public Env {
 public:
  struct Cell {
    bool present = false;
    int shape = 0, color = 0, size = 0;
  };

  explicit ShapesEnv(ShapesConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.goals.empty()) cfg_.goals.push_back(GoalSpec{-1, kColorRed, -1});
    if (static_cast<int>(cfg_.goals.size()) == 1)
      cfg_.goals.assign(cfg_.n_agents, cfg_.goals[0]);
    if (static_cast<int>(cfg_.goals.size()) != cfg_.n_agents)
      throw std::invalid_argument("shapes: goal count must be 1 or n_agents");
    alive_.assign(cfg_.n_agents, true);
    fresh_.assign(cfg_.n_agents, true);
  }

  std::string name() const override { return "shapes"; }
  int agent_count() const override { return cfg_.n_agents; }
  int action_count() const override { return 5; }  // up down left right stay
  int obs_dim() const override { return 25 * 9 + 2 + 8; }
  int grid_size() const override { return cfg_.grid; }
  int horizon() const override { return cfg_.horizon; }

  std::vector<std::vector<double>> reset(std::uint64_t seed) override {
    rng_ = make_rng(seed, 0x5a);
    regenerate_grid();
    spawn_agents();
    steps_ = 0;
    success_ = false;
    done_ = false;
    std::fill(fresh_.begin(), fresh_.end(), true);
    return observe_all();
  }

  EnvStep step(const std::vector<int>& actions) override {
    static constexpr int dr[5] = {-1, 1, 0, 0, 0};
    static constexpr int dc[5] = {0, 0, -1, 1, 0};
    for (int i = 0; i < cfg_.n_agents; ++i) {
      const int a = actions[i];
      const int r = std::clamp(pos_[i][0] + dr[a], 0, cfg_.grid - 1);
      const int c = std::clamp(pos_[i][1] + dc[a], 0, cfg_.grid - 1);
      pos_[i] = {r, c};
    }
    ++steps_;
    int on_goal = 0;
    for (int i = 0; i < cfg_.n_agents; ++i) on_goal += agent_on_goal(i) ? 1 : 0;
    const double r_t = static_cast<double>(on_goal) / cfg_.n_agents;
    const bool all = on_goal == cfg_.n_agents;
    if (all) success_ = true;
    done_ = all || steps_ >= cfg_.horizon;

    EnvStep out;
    out.obs = observe_all();
    out.rewards.assign(cfg_.n_agents, r_t);  // team reward, shared
    out.team_reward = r_t;
    out.done = done_;
    std::fill(fresh_.begin(), fresh_.end(), false);
    return out;
  }

  const std::vector<bool>& alive() const override { return alive_; }
  const std::vector<bool>& fresh() const override { return fresh_; }
  std::vector<std::array<int, 2>> agent_positions() const override { return pos_; }
  int episode_steps() const override { return steps_; }
  bool episode_success() const override { return success_; }

  nlohmann::json config_json() const override {
    nlohmann::json goals = nlohmann::json::array();
    for (const auto& g : cfg_.goals)
      goals.push_back({{"shape", g.shape}, {"color", g.color}, {"size", g.size}});
    return {{"name", name()},      {"grid", cfg_.grid},       {"agents", cfg_.n_agents},
            {"horizon", cfg_.horizon}, {"cell_prob", cfg_.cell_prob}, {"goals", goals}};
  }

  // introspection for tests
  const Cell& cell(int r, int c) const { return grid_[static_cast<size_t>(r) * cfg_.grid + c]; }
  bool agent_on_goal(int i) const { return matches(cell(pos_[i][0], pos_[i][1]), cfg_.goals[i]); }
  const GoalSpec& goal(int i) const { return cfg_.goals[i]; }
  void teleport(int i, int r, int c) { pos_[i] = {r, c}; }  // test support

  static bool matches(const Cell& cell, const GoalSpec& g) {
    if (!cell.present) return false;
    if (g.shape >= 0 && cell.shape != g.shape) return false;
    if (g.color >= 0 && cell.color != g.color) return false;
    if (g.size >= 0 && cell.size != g.size) return false;
    return true;
  }

 private:
  void regenerate_grid() {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> shape(0, 2), color(0, 2), size(0, 1);
    for (int attempt = 0; attempt < 1000; ++attempt) {
      grid_.assign(static_cast<size_t>(cfg_.grid) * cfg_.grid, Cell{});
      for (auto& cell : grid_) {
        if (u(rng_) < cfg_.cell_prob) {
          cell.present = true;
          cell.shape = shape(rng_);
          cell.color = color(rng_);
          cell.size = size(rng_);
        }
      }
      bool ok = true;
      for (const auto& g : cfg_.goals) {
        bool found = false;
        for (const auto& cell : grid_) found = found || matches(cell, g);
        ok = ok && found;
      }
      if (ok) return;
    }
    throw std::runtime_error("shapes: could not generate a grid matching every goal");
  }

  void spawn_agents() {
    std::vector<int> empties;
    for (int idx = 0; idx < cfg_.grid * cfg_.grid; ++idx)
      if (!grid_[idx].present) empties.push_back(idx);
    if (static_cast<int>(empties.size()) < cfg_.n_agents)
      throw std::runtime_error("shapes: not enough empty cells to spawn agents");
    pos_.assign(cfg_.n_agents, {0, 0});
    for (int i = 0; i < cfg_.n_agents; ++i) {
      std::uniform_int_distribution<size_t> pick(0, empties.size() - 1);
      const size_t j = pick(rng_);
      pos_[i] = {empties[j] / cfg_.grid, empties[j] % cfg_.grid};
      empties.erase(empties.begin() + static_cast<std::ptrdiff_t>(j));
    }
  }

  std::vector<std::vector<double>> observe_all() const {
    std::vector<std::vector<double>> obs(cfg_.n_agents);
    for (int i = 0; i < cfg_.n_agents; ++i) obs[i] = observe(i);
    return obs;
  }

  std::vector<double> observe(int i) const {
    std::vector<double> o(obs_dim(), 0.0);
    size_t k = 0;
    for (int dr = -2; dr <= 2; ++dr)
      for (int dc = -2; dc <= 2; ++dc) {
        const int r = pos_[i][0] + dr, c = pos_[i][1] + dc;
        if (r >= 0 && r < cfg_.grid && c >= 0 && c < cfg_.grid && cell(r, c).present) {
          const Cell& cl = cell(r, c);
          o[k] = 1.0;
          o[k + 1 + cl.shape] = 1.0;
          o[k + 4 + cl.color] = 1.0;
          o[k + 7 + cl.size] = 1.0;
        }
        k += 9;
      }
    o[k++] = static_cast<double>(pos_[i][0]) / cfg_.grid;
    o[k++] = static_cast<double>(pos_[i][1]) / cfg_.grid;
    const GoalSpec& g = cfg_.goals[i];
    if (g.shape >= 0) o[k + g.shape] = 1.0;
    if (g.color >= 0) o[k + 3 + g.color] = 1.0;
    if (g.size >= 0) o[k + 6 + g.size] = 1.0;
    return o;
  }

  ShapesConfig cfg_;
  std::mt19937 rng_;
  std::vector<Cell> grid_;
  std::vector<std::array<int, 2>> pos_;
  std::vector<bool> alive_, fresh_;
  int steps_ = 0;
  bool success_ = false, done_ = false;
};

}  // namespace tarmac
