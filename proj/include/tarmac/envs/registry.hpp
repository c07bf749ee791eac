#pragma once

#include <memory>
#include <string>

#include "tarmac/envs/prey.hpp"
#include "tarmac/envs/shapes.hpp"
#include "tarmac/envs/traffic.hpp"

namespace tarmac {

// Named environment presets with optional overrides:
//   grid, agents, horizon, vision, p_arrive, n_max, cell_prob, goals (string,
//   comma-separated per agent, e.g. "red" or "red,red,green,blue").
inline std::unique_ptr<Env> make_env(const std::string& name,
                                     const nlohmann::json& overrides = {}) {
  auto geti = [&](const char* key, int def) {
    return overrides.contains(key) ? overrides.at(key).get<int>() : def;
  };
  auto getd = [&](const char* key, double def) {
    return overrides.contains(key) ? overrides.at(key).get<double>() : def;
  };

  if (name == "shapes") {
    ShapesConfig cfg;
    cfg.grid = geti("grid", 30);
    cfg.n_agents = geti("agents", 4);
    cfg.horizon = geti("horizon", 2 * cfg.grid);
    cfg.cell_prob = getd("cell_prob", 0.2);
    if (overrides.contains("goals")) {
      const std::string text = overrides.at("goals").get<std::string>();
      std::string part;
      for (char ch : text) {
        if (ch == ',') {
          cfg.goals.push_back(parse_goal(part));
          part.clear();
        } else {
          part += ch;
        }
      }
      if (!part.empty()) cfg.goals.push_back(parse_goal(part));
    }
    return std::make_unique<ShapesEnv>(cfg);
  }
  if (name == "traffic-easy" || name == "traffic-hard") {
    const bool hard = name == "traffic-hard";
    TrafficConfig cfg;
    cfg.grid = geti("grid", hard ? 18 : 7);
    cfg.two_way = hard;
    cfg.n_max = geti("n_max", hard ? 20 : 5);
    cfg.p_arrive = getd("p_arrive", hard ? 0.05 : 0.30);
    cfg.horizon = geti("horizon", hard ? 80 : 40);
    return std::make_unique<TrafficEnv>(cfg, name);
  }
  if (name == "prey-small" || name == "prey-medium" || name == "prey-large") {
    PreyConfig cfg;
    if (name == "prey-small") {
      cfg = PreyConfig{5, 3, 0, 20};
    } else if (name == "prey-medium") {
      cfg = PreyConfig{10, 5, 1, 40};
    } else {
      cfg = PreyConfig{20, 10, 1, 80};
    }
    cfg.grid = geti("grid", cfg.grid);
    cfg.n_agents = geti("agents", cfg.n_agents);
    cfg.vision = geti("vision", cfg.vision);
    cfg.horizon = geti("horizon", cfg.horizon);
    return std::make_unique<PreyEnv>(cfg);
  }
  throw std::invalid_argument("unknown environment: " + name);
}

}  // namespace tarmac
