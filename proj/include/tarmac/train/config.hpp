#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "tarmac/comm/comm.hpp"

namespace tarmac {

// Training hyperparameters. Defaults follow the reference setup: RMSProp with
// lr 7e-4 and alpha 0.99, batch 16, gamma 0.99, entropy coefficient 0.01;
// GRU hidden 128, signature/query 16-d, value 32-d.
struct TrainConfig {
  double lr = 7e-4;
  double rmsprop_alpha = 0.99;
  double rmsprop_eps = 1e-5;
  int batch = 16;
  double gamma = 0.99;
  double entropy_coef = 0.01;
  int rollout_len = 20;
  double value_loss_coef = 0.5;
  long total_episodes = 20000;

  int hidden = 128;
  int enc_dim = 64;
  int critic_hidden = 128;
  CommConfig comm;

  // Actor weight: false = the critic value itself (log pi * Q), true = the
  // one-step TD advantage (log pi * (y - Q)), which subtracts the critic as a
  // baseline and is what large-scale runs need for variance control.
  bool advantage_actor = false;
  // Standardize actor weights over each segment (alive rows): keeps the
  // policy-gradient scale independent of the reward magnitude.
  bool normalize_advantage = false;

  double grad_clip = 0.0;  // 0 disables clipping; NaN aborts still apply
  bool curriculum = false;
  double curriculum_start_p = 0.05;
  long curriculum_episodes = 0;  // 0 -> half of total_episodes

  int metrics_every = 10;  // iterations per metrics row
  long eval_every = 0;     // episodes between eval checkpoints, 0 = final only
  int eval_episodes = 500;
  bool greedy_eval = false;
  int attention_log_every = 10;  // log every k-th episode; 0 disables

  void validate() const {
    if (lr < 0 || rmsprop_alpha <= 0 || rmsprop_alpha >= 1 || batch < 1 || gamma < 0 ||
        gamma > 1 || entropy_coef < 0 || rollout_len < 1 || value_loss_coef < 0 ||
        total_episodes < 1 || hidden < 1 || enc_dim < 1 || critic_hidden < 1)
      throw TensorError("invalid training configuration");
    comm.validate();
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"lr", c.lr},
       {"rmsprop_alpha", c.rmsprop_alpha},
       {"rmsprop_eps", c.rmsprop_eps},
       {"batch", c.batch},
       {"gamma", c.gamma},
       {"entropy_coef", c.entropy_coef},
       {"rollout_len", c.rollout_len},
       {"value_loss_coef", c.value_loss_coef},
       {"advantage_actor", c.advantage_actor},
       {"normalize_advantage", c.normalize_advantage},
       {"total_episodes", c.total_episodes},
       {"hidden", c.hidden},
       {"enc_dim", c.enc_dim},
       {"critic_hidden", c.critic_hidden},
       {"comm",
        {{"d_k", c.comm.d_k},
         {"d_v", c.comm.d_v},
         {"rounds", c.comm.rounds},
         {"mode", to_string(c.comm.mode)},
         {"gating", c.comm.gating},
         {"self_attention", c.comm.self_attention}}},
       {"grad_clip", c.grad_clip},
       {"curriculum", c.curriculum},
       {"curriculum_start_p", c.curriculum_start_p},
       {"curriculum_episodes", c.curriculum_episodes},
       {"metrics_every", c.metrics_every},
       {"eval_every", c.eval_every},
       {"eval_episodes", c.eval_episodes},
       {"greedy_eval", c.greedy_eval},
       {"attention_log_every", c.attention_log_every}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.lr = j.value("lr", d.lr);
  c.rmsprop_alpha = j.value("rmsprop_alpha", d.rmsprop_alpha);
  c.rmsprop_eps = j.value("rmsprop_eps", d.rmsprop_eps);
  c.batch = j.value("batch", d.batch);
  c.gamma = j.value("gamma", d.gamma);
  c.entropy_coef = j.value("entropy_coef", d.entropy_coef);
  c.rollout_len = j.value("rollout_len", d.rollout_len);
  c.value_loss_coef = j.value("value_loss_coef", d.value_loss_coef);
  c.advantage_actor = j.value("advantage_actor", d.advantage_actor);
  c.normalize_advantage = j.value("normalize_advantage", d.normalize_advantage);
  c.total_episodes = j.value("total_episodes", d.total_episodes);
  c.hidden = j.value("hidden", d.hidden);
  c.enc_dim = j.value("enc_dim", d.enc_dim);
  c.critic_hidden = j.value("critic_hidden", d.critic_hidden);
  if (j.contains("comm")) {
    const auto& jc = j.at("comm");
    c.comm.d_k = jc.value("d_k", d.comm.d_k);
    c.comm.d_v = jc.value("d_v", d.comm.d_v);
    c.comm.rounds = jc.value("rounds", d.comm.rounds);
    c.comm.mode = comm_mode_from(jc.value("mode", std::string("targeted")));
    c.comm.gating = jc.value("gating", d.comm.gating);
    c.comm.self_attention = jc.value("self_attention", d.comm.self_attention);
  }
  c.grad_clip = j.value("grad_clip", d.grad_clip);
  c.curriculum = j.value("curriculum", d.curriculum);
  c.curriculum_start_p = j.value("curriculum_start_p", d.curriculum_start_p);
  c.curriculum_episodes = j.value("curriculum_episodes", d.curriculum_episodes);
  c.metrics_every = j.value("metrics_every", d.metrics_every);
  c.eval_every = j.value("eval_every", d.eval_every);
  c.eval_episodes = j.value("eval_episodes", d.eval_episodes);
  c.greedy_eval = j.value("greedy_eval", d.greedy_eval);
  c.attention_log_every = j.value("attention_log_every", d.attention_log_every);
}

// A fully reproducible run: environment + hyperparameters + seed + outputs.
struct RunConfig {
  std::string env;
  nlohmann::json env_overrides = nlohmann::json::object();
  TrainConfig train;
  std::uint64_t seed = 1;
  std::string out_dir;

  void validate() const {
    if (env.empty()) throw TensorError("run config: env name required");
    train.validate();
  }
};

inline void to_json(nlohmann::json& j, const RunConfig& rc) {
  j = {{"env", rc.env},
       {"env_overrides", rc.env_overrides},
       {"train", rc.train},
       {"seed", rc.seed},
       {"out_dir", rc.out_dir}};
}

inline void from_json(const nlohmann::json& j, RunConfig& rc) {
  rc.env = j.value("env", std::string{});
  rc.env_overrides = j.value("env_overrides", nlohmann::json::object());
  if (j.contains("train")) rc.train = j.at("train").get<TrainConfig>();
  rc.seed = j.value("seed", std::uint64_t{1});
  rc.out_dir = j.value("out_dir", std::string{});
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw TensorError("cannot open config file " + path.string());
  return nlohmann::json::parse(in).get<RunConfig>();
}

inline void save_run_config(const RunConfig& rc, const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << nlohmann::json(rc).dump(2) << "\n";
}

// Stable config fingerprint (FNV-1a over the canonical JSON dump).
inline std::string config_hash(const RunConfig& rc) {
  const std::string dump = nlohmann::json(rc).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : dump) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace tarmac
