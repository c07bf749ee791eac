#pragma once

#include <cmath>
#include <iostream>
#include <memory>

#include "tarmac/envs/registry.hpp"
#include "tarmac/envs/traffic.hpp"
#include "tarmac/nn/checkpoint.hpp"
#include "tarmac/train/loss.hpp"
#include "tarmac/train/rollout.hpp"

namespace tarmac {

// Non-finite loss: training stops with a diagnostic payload.
struct TrainAbort : std::runtime_error {
  nlohmann::json diagnostics;
  explicit TrainAbort(nlohmann::json diag)
      : std::runtime_error("training aborted: non-finite loss"), diagnostics(std::move(diag)) {}
};

struct TrainOutcome {
  long iterations = 0;
  long episodes = 0;
  EvalSummary final_eval;
  EvalSummary best_eval;  // best checkpointed evaluation (success-wise)
  std::string run_dir;
};

// Batched synchronous actor-critic with a centralized critic, entropy
// regularization and RMSProp. Single worker: rollout collection, the loss
// build and the optimizer step alternate in one thread, which also makes runs
// bit-reproducible for a fixed seed.
template <typename T>
class Trainer {
 public:
  explicit Trainer(RunConfig rc) : rc_(std::move(rc)) {
    rc_.validate();
    auto probe = make_env(rc_.env, rc_.env_overrides);
    PolicyLayout lay;
    lay.obs_dim = probe->obs_dim();
    lay.enc_dim = rc_.train.enc_dim;
    lay.hidden = rc_.train.hidden;
    lay.actions = probe->action_count();
    lay.comm = rc_.train.comm;
    store_ = std::make_unique<ParamStore<T>>();
    net_ = PolicyNet<T>::create(*store_, lay);
    critic_ = CriticNet<T>::create(*store_, probe->agent_count(), lay.hidden, lay.actions,
                                   rc_.train.critic_hidden);
    store_->init_params(rc_.seed);

    std::vector<std::unique_ptr<Env>> envs;
    for (int b = 0; b < rc_.train.batch; ++b) envs.push_back(make_env(rc_.env, rc_.env_overrides));
    rollout_ = std::make_unique<Rollout<T>>(std::move(envs), &net_, rc_.seed);
  }

  ParamStore<T>& store() { return *store_; }
  PolicyNet<T>& net() { return net_; }
  CriticNet<T>& critic() { return critic_; }
  Rollout<T>& rollout() { return *rollout_; }
  const RunConfig& config() const { return rc_; }

  // One optimizer iteration; returns the loss report.
  LossBuild<T> step() {
    auto traj = rollout_->collect(rc_.train.rollout_len, critic_);
    Tape<T> tape;
    auto losses = build_losses(tape, net_, critic_, traj, rc_.train);
    const double total = static_cast<double>(losses.total.item());
    if (!std::isfinite(total) || !std::isfinite(losses.actor) || !std::isfinite(losses.critic))
      throw TrainAbort(abort_diagnostics(losses));
    tape.backward(losses.total);
    if (rc_.train.grad_clip > 0) {
      const double norm = store_->grad_norm();
      if (norm > rc_.train.grad_clip)
        store_->scale_grads(static_cast<T>(rc_.train.grad_clip / norm));
    }
    store_->rmsprop_step(static_cast<T>(rc_.train.lr), static_cast<T>(rc_.train.rmsprop_alpha),
                         static_cast<T>(rc_.train.rmsprop_eps));
    ++iterations_;
    return losses;
  }

  TrainOutcome run(std::ostream* console = nullptr) {
    namespace fs = std::filesystem;
    const bool persist = !rc_.out_dir.empty();
    std::unique_ptr<MetricsWriter> metrics;
    std::unique_ptr<AttentionLogger> alog;
    if (persist) {
      fs::create_directories(rc_.out_dir);
      {
        nlohmann::json merged = rc_;
        merged["env_resolved"] = rollout_->env(0).config_json();
        std::ofstream cfg(fs::path(rc_.out_dir) / "config.json", std::ios::trunc);
        cfg << merged.dump(2) << "\n";
      }
      metrics = std::make_unique<MetricsWriter>(fs::path(rc_.out_dir) / "metrics.csv");
      if (rc_.train.attention_log_every > 0) {
        alog = std::make_unique<AttentionLogger>(fs::path(rc_.out_dir) / "attention.jsonl");
        rollout_->set_attention_logger(alog.get(), rc_.train.attention_log_every);
      }
    }

    TrainOutcome out;
    out.run_dir = rc_.out_dir;
    long window_success = 0, window_eps = 0;
    double window_steps = 0, window_reward = 0;
    double window_actor = 0, window_critic = 0, window_entropy = 0;
    int window_iters = 0;
    long next_eval = rc_.train.eval_every > 0 ? rc_.train.eval_every : -1;
    nlohmann::json eval_history = nlohmann::json::array();
    out.best_eval.success_rate = -1;
    out.best_eval.mean_steps = 1e18;

    try {
      while (rollout_->episodes_done() < rc_.train.total_episodes) {
        apply_curriculum();
        auto losses = step();
        window_actor += losses.actor;
        window_critic += losses.critic;
        window_entropy += losses.entropy;
        ++window_iters;
        for (const auto& st : rollout_->drain_finished()) {
          window_success += st.success ? 1 : 0;
          window_steps += st.steps;
          window_reward += st.reward;
          ++window_eps;
        }
        if (iterations_ % std::max(1, rc_.train.metrics_every) == 0) {
          const double sr = window_eps ? static_cast<double>(window_success) / window_eps : 0.0;
          const double ms = window_eps ? window_steps / window_eps : 0.0;
          const double mr = window_eps ? window_reward / window_eps : 0.0;
          if (metrics)
            metrics->row(iterations_, rollout_->episodes_done(), sr, ms, mr,
                         window_actor / window_iters, window_critic / window_iters,
                         window_entropy / window_iters);
          if (console)
            (*console) << "iter " << iterations_ << " episodes " << rollout_->episodes_done()
                       << " success " << sr << " steps " << ms << " reward " << mr << " entropy "
                       << window_entropy / window_iters << "\n";
          window_success = window_eps = 0;
          window_steps = window_reward = 0;
          window_actor = window_critic = window_entropy = 0;
          window_iters = 0;
        }
        if (next_eval > 0 && rollout_->episodes_done() >= next_eval) {
          auto summary = checkpoint_and_eval(eval_history, persist);
          if (summary.success_rate > out.best_eval.success_rate ||
              (summary.success_rate == out.best_eval.success_rate &&
               summary.mean_steps < out.best_eval.mean_steps))
            out.best_eval = summary;
          next_eval += rc_.train.eval_every;
        }
      }
    } catch (const TrainAbort& abort) {
      if (persist) {
        std::ofstream dump(fs::path(rc_.out_dir) / "abort.json", std::ios::trunc);
        dump << abort.diagnostics.dump(2) << "\n";
      }
      throw;
    }

    out.iterations = iterations_;
    out.episodes = rollout_->episodes_done();
    if (persist) save_checkpoint(*store_, fs::path(rc_.out_dir) / "checkpoint", checkpoint_meta());
    auto final_env = make_env(rc_.env, rc_.env_overrides);
    out.final_eval =
        evaluate(net_, *final_env, rc_.train.eval_episodes, mix_seed(rc_.seed, 0xFEA1),
                 rc_.train.greedy_eval);
    if (out.final_eval.success_rate > out.best_eval.success_rate ||
        (out.final_eval.success_rate == out.best_eval.success_rate &&
         out.final_eval.mean_steps < out.best_eval.mean_steps))
      out.best_eval = out.final_eval;
    if (persist) {
      eval_history.push_back(eval_json(out.final_eval, rollout_->episodes_done()));
      std::ofstream evals(fs::path(rc_.out_dir) / "evals.json", std::ios::trunc);
      evals << eval_history.dump(2) << "\n";
    }
    return out;
  }

 private:
  void apply_curriculum() {
    if (!rc_.train.curriculum) return;
    const long span = rc_.train.curriculum_episodes > 0 ? rc_.train.curriculum_episodes
                                                        : rc_.train.total_episodes / 2;
    const double frac =
        std::min(1.0, static_cast<double>(rollout_->episodes_done()) / std::max<long>(1, span));
    for (int b = 0; b < rollout_->batch(); ++b) {
      if (auto* traffic = dynamic_cast<TrafficEnv*>(&rollout_->env(b))) {
        const double target = target_p_arrive_ >= 0 ? target_p_arrive_ : traffic->p_arrive();
        if (target_p_arrive_ < 0) target_p_arrive_ = target;
        traffic->set_p_arrive(rc_.train.curriculum_start_p +
                              frac * (target - rc_.train.curriculum_start_p));
      }
    }
  }

  nlohmann::json checkpoint_meta() const {
    return {{"config", rc_},
            {"iterations", iterations_},
            {"episodes", rollout_->episodes_done()},
            {"init", "uniform_fan_in"},
            {"gru_form", "z,r gates on [x||h]; candidate on [x||r.h]"}};
  }

  nlohmann::json eval_json(const EvalSummary& s, long episodes) const {
    return {{"episodes_trained", episodes},   {"eval_episodes", s.episodes},
            {"success_rate", s.success_rate}, {"success_se", s.success_se},
            {"mean_steps", s.mean_steps},     {"mean_reward", s.mean_reward}};
  }

  EvalSummary checkpoint_and_eval(nlohmann::json& history, bool persist) {
    namespace fs = std::filesystem;
    if (persist)
      save_checkpoint(*store_, fs::path(rc_.out_dir) / "checkpoint", checkpoint_meta());
    auto env = make_env(rc_.env, rc_.env_overrides);
    auto summary = evaluate(net_, *env, rc_.train.eval_episodes,
                            mix_seed(rc_.seed, 0xE7AL + rollout_->episodes_done()),
                            rc_.train.greedy_eval);
    history.push_back(eval_json(summary, rollout_->episodes_done()));
    return summary;
  }

  nlohmann::json abort_diagnostics(const LossBuild<T>& losses) const {
    nlohmann::json per_param = nlohmann::json::array();
    for (const auto& p : store_->params()) {
      double norm = 0;
      for (T v : p->data.value) norm += static_cast<double>(v) * static_cast<double>(v);
      per_param.push_back({{"name", p->name}, {"l2", std::sqrt(norm)}});
    }
    return {{"iteration", iterations_},
            {"episodes", rollout_->episodes_done()},
            {"actor_loss", losses.actor},
            {"critic_loss", losses.critic},
            {"entropy", losses.entropy},
            {"params", per_param}};
  }

  RunConfig rc_;
  std::unique_ptr<ParamStore<T>> store_;
  PolicyNet<T> net_;
  CriticNet<T> critic_;
  std::unique_ptr<Rollout<T>> rollout_;
  long iterations_ = 0;
  double target_p_arrive_ = -1;
};

// Rebuilds nets from a run directory (config.json + checkpoint/) and runs a
// decentralized evaluation.
template <typename T>
EvalSummary evaluate_run_dir(const std::filesystem::path& run_dir, const std::string& env_name,
                             const nlohmann::json& env_overrides, int episodes,
                             std::uint64_t seed, bool greedy, AttentionLogger* alog = nullptr,
                             int alog_every = 1, TraceLogger* trace = nullptr) {
  RunConfig rc = load_run_config(run_dir / "config.json");
  const std::string env = env_name.empty() ? rc.env : env_name;
  const nlohmann::json overrides = env_overrides.is_null() || env_overrides.empty()
                                       ? rc.env_overrides
                                       : env_overrides;
  auto probe = make_env(env, overrides);
  PolicyLayout lay;
  lay.obs_dim = probe->obs_dim();
  lay.enc_dim = rc.train.enc_dim;
  lay.hidden = rc.train.hidden;
  lay.actions = probe->action_count();
  lay.comm = rc.train.comm;
  ParamStore<T> store;
  auto net = PolicyNet<T>::create(store, lay);
  auto critic = CriticNet<T>::create(store, probe->agent_count(), lay.hidden, lay.actions,
                                     rc.train.critic_hidden);
  (void)critic;
  load_checkpoint(store, run_dir / "checkpoint");
  return evaluate(net, *probe, episodes, seed, greedy, alog, alog_every, trace);
}

}  // namespace tarmac
