#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace tarmac {

struct EnvStep {
  std::vector<std::vector<double>> obs;  // per agent slot; zeros for dead slots
  std::vector<double> rewards;           // per agent slot
  double team_reward = 0;
  bool done = false;
};

// Dec-POMDP contract shared by all environments: fixed agent slots, strictly
// local observations, deterministic given (seed, action sequence).
class Env {
 public:
  virtual ~Env() = default;

  virtual std::string name() const = 0;
  virtual int agent_count() const = 0;   // fixed slot count (N or N_max)
  virtual int action_count() const = 0;
  virtual int obs_dim() const = 0;
  virtual int grid_size() const = 0;
  virtual int horizon() const = 0;

  virtual std::vector<std::vector<double>> reset(std::uint64_t seed) = 0;
  virtual EnvStep step(const std::vector<int>& actions) = 0;

  virtual const std::vector<bool>& alive() const = 0;
  // Slots whose agent (re)spawned since the previous step; recurrent state
  // must be zeroed for them before the next forward pass.
  virtual const std::vector<bool>& fresh() const = 0;
  virtual std::vector<std::array<int, 2>> agent_positions() const = 0;

  virtual int episode_steps() const = 0;
  virtual bool episode_success() const = 0;  // meaningful once done
  virtual nlohmann::json config_json() const = 0;
};

}  // namespace tarmac
