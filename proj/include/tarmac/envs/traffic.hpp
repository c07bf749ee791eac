#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <random>
#include <stdexcept>

#include "tarmac/core/rng.hpp"
#include "tarmac/envs/env.hpp"

namespace tarmac {

// Traffic junction: cars follow pre-assigned routes over road lanes with
// {gas, brake} actions. Easy is one junction of two one-way roads; hard is
// four connected junctions of two-way roads. Routes are enumerated at
// construction as shortest directed paths from each entry to each reachable
// exit, with turns inside junction boxes. Reward per active car is the time
// penalty -0.01*tau plus -10 per collision; an episode succeeds if it ends
// with zero collisions.

struct TrafficConfig {
  int grid = 7;
  bool two_way = false;  // easy: one-way roads; hard: two-way
  int n_max = 5;
  double p_arrive = 0.30;
  int horizon = 40;
};

// Collision rule: two or more present cars on one cell after simultaneous
// movement, or a pair that swapped cells through each other. Positions of
// absent cars are ignored.
inline std::vector<bool> detect_collisions(const std::vector<std::array<int, 2>>& before,
                                           const std::vector<std::array<int, 2>>& after,
                                           const std::vector<bool>& present,
                                           const std::vector<bool>& moved) {
  const size_t n = present.size();
  std::vector<bool> collided(n, false);
  for (size_t i = 0; i < n; ++i) {
    if (!present[i]) continue;
    for (size_t j = i + 1; j < n; ++j) {
      if (!present[j]) continue;
      const bool same_cell = after[i] == after[j];
      const bool swapped = moved[i] && moved[j] && before[i] == after[j] &&
                           before[j] == after[i] && before[i] != before[j];
      if (same_cell || swapped) collided[i] = collided[j] = true;
    }
  }
  return collided;
}

class TrafficEnv final : public Env {
 public:
  static constexpr int kGas = 0;
  static constexpr int kBrake = 1;

  explicit TrafficEnv(TrafficConfig cfg, std::string label = "traffic")
      : cfg_(std::move(cfg)), label_(std::move(label)) {
    build_lanes();
    build_routes();
    cars_.assign(cfg_.n_max, Car{});
    alive_.assign(cfg_.n_max, false);
    fresh_.assign(cfg_.n_max, false);
  }

  std::string name() const override { return label_; }
  int agent_count() const override { return cfg_.n_max; }
  int action_count() const override { return 2; }
  int obs_dim() const override { return 9 * 2 + 2 + 1 + static_cast<int>(routes_.size()); }
  int grid_size() const override { return cfg_.grid; }
  int horizon() const override { return cfg_.horizon; }

  std::vector<std::vector<double>> reset(std::uint64_t seed) override {
    rng_ = make_rng(seed, 0x7f);
    for (auto& car : cars_) car.active = false;
    std::fill(alive_.begin(), alive_.end(), false);
    std::fill(fresh_.begin(), fresh_.end(), false);
    steps_ = 0;
    collisions_ = 0;
    step_collisions_ = 0;
    done_ = false;
    spawn_cars();
    return observe_all();
  }

  EnvStep step(const std::vector<int>& actions) override {
    std::vector<std::array<int, 2>> before(cfg_.n_max, {-1, -1});
    std::vector<bool> moved(cfg_.n_max, false);
    std::vector<bool> exited(cfg_.n_max, false);
    for (int i = 0; i < cfg_.n_max; ++i)
      if (cars_[i].active) before[i] = position(i);

    // simultaneous movement
    for (int i = 0; i < cfg_.n_max; ++i) {
      Car& car = cars_[i];
      if (!car.active) continue;
      ++car.tau;
      if (actions[i] == kGas) {
        ++car.route_idx;
        if (car.route_idx >= static_cast<int>(routes_[car.route_id].size())) {
          car.active = false;  // completed its route, leaves the grid
          exited[i] = true;
        }
        moved[i] = true;
      }
    }

    step_collisions_ = 0;
    std::vector<std::array<int, 2>> after(cfg_.n_max, {-1, -1});
    std::vector<bool> present(cfg_.n_max, false);
    for (int i = 0; i < cfg_.n_max; ++i)
      if (cars_[i].active) {
        after[i] = position(i);
        present[i] = true;
      }
    const std::vector<bool> collided = detect_collisions(before, after, present, moved);

    EnvStep out;
    out.rewards.assign(cfg_.n_max, 0.0);
    for (int i = 0; i < cfg_.n_max; ++i) {
      if (!cars_[i].active && !exited[i]) continue;
      double r = -0.01 * cars_[i].tau;
      if (collided[i]) {
        r -= 10.0;
        ++step_collisions_;
        ++collisions_;
      }
      out.rewards[i] = r;
      out.team_reward += r;
    }

    ++steps_;
    std::fill(fresh_.begin(), fresh_.end(), false);
    spawn_cars();
    for (int i = 0; i < cfg_.n_max; ++i) alive_[i] = cars_[i].active;

    done_ = steps_ >= cfg_.horizon;
    out.done = done_;
    out.obs = observe_all();
    return out;
  }

  const std::vector<bool>& alive() const override { return alive_; }
  const std::vector<bool>& fresh() const override { return fresh_; }

  std::vector<std::array<int, 2>> agent_positions() const override {
    std::vector<std::array<int, 2>> pos(cfg_.n_max, {-1, -1});
    for (int i = 0; i < cfg_.n_max; ++i)
      if (cars_[i].active) pos[i] = position(i);
    return pos;
  }

  int episode_steps() const override { return steps_; }
  bool episode_success() const override { return collisions_ == 0; }

  nlohmann::json config_json() const override {
    return {{"name", label_},        {"grid", cfg_.grid},   {"two_way", cfg_.two_way},
            {"n_max", cfg_.n_max},   {"p_arrive", cfg_.p_arrive},
            {"horizon", cfg_.horizon}, {"routes", routes_.size()}};
  }

  // curriculum support
  void set_p_arrive(double p) { cfg_.p_arrive = p; }
  double p_arrive() const { return cfg_.p_arrive; }

  // introspection for tests and analysis
  int route_count() const { return static_cast<int>(routes_.size()); }
  const std::vector<std::array<int, 2>>& route(int id) const { return routes_[id]; }
  int active_count() const {
    int n = 0;
    for (const auto& car : cars_) n += car.active ? 1 : 0;
    return n;
  }
  int car_tau(int i) const { return cars_[i].tau; }
  int car_route(int i) const { return cars_[i].route_id; }
  int collisions_this_step() const { return step_collisions_; }
  int total_collisions() const { return collisions_; }
  bool is_road(int r, int c) const {
    return road_dirs_.count({r, c}) > 0;
  }
  // test support: plant a car directly on a route
  void force_car(int slot, int route_id, int route_idx, int tau) {
    cars_[slot] = Car{true, route_id, route_idx, tau};
    alive_[slot] = true;
  }

 private:
  // headings: 0=N 1=E 2=S 3=W
  static constexpr int kDr[4] = {-1, 0, 1, 0};
  static constexpr int kDc[4] = {0, 1, 0, -1};

  struct Car {
    bool active = false;
    int route_id = 0;
    int route_idx = 0;
    int tau = 0;
  };

  std::array<int, 2> position(int i) const {
    const Car& car = cars_[i];
    return routes_[car.route_id][car.route_idx];
  }

  void add_lane(bool horizontal, int fixed, int heading) {
    for (int k = 0; k < cfg_.grid; ++k) {
      const std::array<int, 2> cell = horizontal ? std::array<int, 2>{fixed, k}
                                                 : std::array<int, 2>{k, fixed};
      road_dirs_[cell].push_back(heading);
    }
    // entry: border cell where the lane points into the grid
    const int last = cfg_.grid - 1;
    std::array<int, 2> entry, exit;
    if (horizontal) {
      entry = heading == 1 ? std::array<int, 2>{fixed, 0} : std::array<int, 2>{fixed, last};
      exit = heading == 1 ? std::array<int, 2>{fixed, last} : std::array<int, 2>{fixed, 0};
    } else {
      entry = heading == 2 ? std::array<int, 2>{0, fixed} : std::array<int, 2>{last, fixed};
      exit = heading == 2 ? std::array<int, 2>{last, fixed} : std::array<int, 2>{0, fixed};
    }
    entries_.push_back({entry, heading});
    exits_.push_back(exit);
  }

  void build_lanes() {
    const int g = cfg_.grid;
    if (!cfg_.two_way) {
      add_lane(true, g / 2, 1);   // eastbound
      add_lane(false, g / 2, 2);  // southbound
    } else {
      const int a = g / 3 - 1, b = g / 3 - 1 + g / 3;
      for (int r : {a, b}) {
        add_lane(true, r, 3);      // westbound on the top lane
        add_lane(true, r + 1, 1);  // eastbound on the bottom lane
      }
      for (int c : {a, b}) {
        add_lane(false, c, 2);      // southbound on the left lane
        add_lane(false, c + 1, 0);  // northbound on the right lane
      }
    }
  }

  bool carries(const std::array<int, 2>& cell, int heading) const {
    auto it = road_dirs_.find(cell);
    if (it == road_dirs_.end()) return false;
    return std::find(it->second.begin(), it->second.end(), heading) != it->second.end();
  }

  bool in_grid(const std::array<int, 2>& cell) const {
    return cell[0] >= 0 && cell[0] < cfg_.grid && cell[1] >= 0 && cell[1] < cfg_.grid;
  }

  // Shortest directed paths from each entry to every reachable exit except
  // the U-turn exit at the entry's own road end.
  void build_routes() {
    entry_routes_.assign(entries_.size(), {});
    for (size_t e = 0; e < entries_.size(); ++e) {
      const auto [start, dir0] = entries_[e];
      // BFS over (cell, heading)
      std::map<std::pair<std::array<int, 2>, int>, std::pair<std::array<int, 2>, int>> parent;
      std::deque<std::pair<std::array<int, 2>, int>> frontier;
      frontier.push_back({start, dir0});
      parent[{start, dir0}] = {{-1, -1}, -1};
      std::map<std::array<int, 2>, std::pair<std::array<int, 2>, int>> found_exit;
      while (!frontier.empty()) {
        auto [cell, heading] = frontier.front();
        frontier.pop_front();
        // leaving the grid ahead means this cell is an exit for this heading
        const std::array<int, 2> ahead{cell[0] + kDr[heading], cell[1] + kDc[heading]};
        if (!in_grid(ahead)) {
          if (!found_exit.count(cell)) found_exit[cell] = {cell, heading};
          continue;
        }
        // straight, then turns in fixed heading order
        std::vector<int> nexts{heading};
        auto it = road_dirs_.find(cell);
        for (int d : it->second)
          if (d != heading && d != (heading + 2) % 4) nexts.push_back(d);
        for (int d : nexts) {
          const std::array<int, 2> nxt{cell[0] + kDr[d], cell[1] + kDc[d]};
          if (!in_grid(nxt) || !carries(nxt, d)) continue;
          if (parent.count({nxt, d})) continue;
          parent[{nxt, d}] = {cell, heading};
          frontier.push_back({nxt, d});
        }
      }
      for (const auto& [exit_cell, state] : found_exit) {
        if (exit_cell == exits_[e]) {
          // exiting straight back out of the entry's own road end is only a
          // U-turn for two-way roads; for one-way roads it is the straight run
          if (cfg_.two_way && exit_cell == start) continue;
        }
        if (cfg_.two_way && is_same_road_end(e, exit_cell)) continue;
        std::vector<std::array<int, 2>> path;
        auto cur = state;
        while (cur.second != -1) {
          path.push_back(cur.first);
          cur = parent.at(cur);
        }
        std::reverse(path.begin(), path.end());
        entry_routes_[e].push_back(static_cast<int>(routes_.size()));
        routes_.push_back(std::move(path));
      }
      if (entry_routes_[e].empty())
        throw std::runtime_error("traffic: entry with no routes");
    }
  }

  // The exit paired with entry e (same road, same border end).
  bool is_same_road_end(size_t e, const std::array<int, 2>& exit_cell) const {
    const auto& entry = entries_[e].first;
    // paired lanes are adjacent rows/cols ending at the same border
    if (entry[0] == 0 || entry[0] == cfg_.grid - 1) {
      return exit_cell[0] == entry[0] && std::abs(exit_cell[1] - entry[1]) == 1;
    }
    if (entry[1] == 0 || entry[1] == cfg_.grid - 1) {
      return exit_cell[1] == entry[1] && std::abs(exit_cell[0] - entry[0]) == 1;
    }
    return false;
  }

  void spawn_cars() {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (size_t e = 0; e < entries_.size(); ++e) {
      if (u(rng_) >= cfg_.p_arrive) continue;
      int slot = -1;
      for (int i = 0; i < cfg_.n_max; ++i)
        if (!cars_[i].active) {
          slot = i;
          break;
        }
      if (slot < 0) continue;  // team at capacity
      // spawns are unconditional: a car parked on the entry cell will be
      // rear-ended, so blocking an arrival point is not a safe strategy
      const auto& candidates = entry_routes_[e];
      std::uniform_int_distribution<size_t> pick(0, candidates.size() - 1);
      Car& car = cars_[slot];
      car.active = true;
      car.route_id = candidates[pick(rng_)];
      car.route_idx = 0;
      car.tau = 0;
      alive_[slot] = true;
      fresh_[slot] = true;
    }
  }

  std::vector<std::vector<double>> observe_all() const {
    std::vector<std::vector<double>> obs(cfg_.n_max);
    for (int i = 0; i < cfg_.n_max; ++i) {
      obs[i].assign(obs_dim(), 0.0);
      if (!cars_[i].active) continue;
      const auto pos = position(i);
      size_t k = 0;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const std::array<int, 2> cell{pos[0] + dr, pos[1] + dc};
          if (in_grid(cell) && road_dirs_.count(cell)) obs[i][k] = 1.0;
          for (int j = 0; j < cfg_.n_max; ++j)
            if (j != i && cars_[j].active && position(j) == cell) obs[i][k + 1] = 1.0;
          k += 2;
        }
      obs[i][k++] = static_cast<double>(pos[0]) / cfg_.grid;
      obs[i][k++] = static_cast<double>(pos[1]) / cfg_.grid;
      obs[i][k++] = static_cast<double>(cars_[i].tau) / cfg_.horizon;
      obs[i][k + cars_[i].route_id] = 1.0;
    }
    return obs;
  }

  TrafficConfig cfg_;
  std::string label_;
  std::mt19937 rng_;
  std::map<std::array<int, 2>, std::vector<int>> road_dirs_;
  std::vector<std::pair<std::array<int, 2>, int>> entries_;
  std::vector<std::array<int, 2>> exits_;
  std::vector<std::vector<std::array<int, 2>>> routes_;
  std::vector<std::vector<int>> entry_routes_;
  std::vector<Car> cars_;
  std::vector<bool> alive_, fresh_;
  int steps_ = 0, collisions_ = 0, step_collisions_ = 0;
  bool done_ = false;
};

}  // namespace tarmac
