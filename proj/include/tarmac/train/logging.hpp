#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace tarmac {

// Attention JSONL: one record per (episode, t, round, receiver) carrying the
// weight row over senders, gate bits, alive mask and agent positions, plus
// the receiver's brake probability (P(action=1)) for spatial analyses.
// Records are only written for receivers with at least one allowed sender, so
// every weight row sums to 1 within tolerance.
class AttentionLogger {
 public:
  explicit AttentionLogger(const std::filesystem::path& path) {
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    out_.open(path, std::ios::trunc);
  }

  void log(long episode, int t, int round, int receiver, const std::vector<double>& weights,
           const std::vector<int>& gates, const std::vector<bool>& alive,
           const std::vector<std::array<int, 2>>& positions, double p_brake) {
    nlohmann::json rec{{"episode", episode}, {"t", t},         {"round", round},
                       {"receiver", receiver}, {"weights", weights}, {"gates", gates},
                       {"p_brake", p_brake}};
    rec["alive"] = std::vector<int>(alive.begin(), alive.end());
    auto pos = nlohmann::json::array();
    for (const auto& p : positions) pos.push_back({p[0], p[1]});
    rec["positions"] = pos;
    out_ << rec.dump() << "\n";
  }

  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
};

// Rollout trace JSONL: one record per environment timestep.
class TraceLogger {
 public:
  explicit TraceLogger(const std::filesystem::path& path) { out_.open(path, std::ios::trunc); }

  void log(long episode, int t, const std::vector<std::array<int, 2>>& positions,
           const std::vector<int>& actions, const std::vector<double>& rewards,
           double team_reward, const std::vector<bool>& alive, bool done) {
    nlohmann::json rec{{"episode", episode}, {"t", t},           {"actions", actions},
                       {"rewards", rewards}, {"team_reward", team_reward}, {"done", done}};
    rec["alive"] = std::vector<int>(alive.begin(), alive.end());
    auto pos = nlohmann::json::array();
    for (const auto& p : positions) pos.push_back({p[0], p[1]});
    rec["positions"] = pos;
    out_ << rec.dump() << "\n";
  }

 private:
  std::ofstream out_;
};

// Append-only metrics CSV with a fixed header.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path) {
    out_.open(path, std::ios::trunc);
    out_ << "iteration,episodes,success_rate,mean_steps,mean_reward,actor_loss,critic_loss,"
            "entropy\n";
  }

  void row(long iteration, long episodes, double success_rate, double mean_steps,
           double mean_reward, double actor_loss, double critic_loss, double entropy) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%ld,%ld,%.6f,%.4f,%.6f,%.6f,%.6f,%.6f\n", iteration,
                  episodes, success_rate, mean_steps, mean_reward, actor_loss, critic_loss,
                  entropy);
    out_ << buf;
    out_.flush();
  }

 private:
  std::ofstream out_;
};

}  // namespace tarmac
