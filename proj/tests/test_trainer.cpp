#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "tarmac/train/trainer.hpp"

using namespace tarmac;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_config(const std::string& env, int batch = 2, long episodes = 20) {
  RunConfig rc;
  rc.env = env;
  rc.train.batch = batch;
  rc.train.total_episodes = episodes;
  rc.train.rollout_len = 5;
  rc.train.hidden = 8;
  rc.train.enc_dim = 8;
  rc.train.critic_hidden = 8;
  rc.train.comm.d_k = 4;
  rc.train.comm.d_v = 4;
  rc.train.eval_episodes = 5;
  rc.train.metrics_every = 2;
  rc.seed = 12;
  return rc;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("td_targets hand cases") {
  SECTION("terminal step keeps only its reward") {
    auto y = td_targets({{1.0}}, {{1}}, {{0.7}}, {9.9}, 0.9);
    CHECK(y[0][0] == 1.0);
  }
  SECTION("gamma zero reduces to rewards") {
    auto y = td_targets({{1.0}, {2.0}, {3.0}}, {{0}, {0}, {0}}, {{5.0}, {6.0}, {7.0}}, {8.0}, 0.0);
    CHECK(y[0][0] == 1.0);
    CHECK(y[1][0] == 2.0);
    CHECK(y[2][0] == 3.0);
  }
  SECTION("three-step hand recurrence with bootstrap") {
    const double gamma = 0.5;
    auto y = td_targets({{1.0}, {-2.0}, {0.5}}, {{0}, {0}, {0}}, {{10.0}, {4.0}, {-6.0}}, {2.0},
                        gamma);
    CHECK(y[0][0] == Catch::Approx(1.0 + gamma * 4.0));
    CHECK(y[1][0] == Catch::Approx(-2.0 + gamma * -6.0));
    CHECK(y[2][0] == Catch::Approx(0.5 + gamma * 2.0));
  }
  SECTION("summed targets equal the undiscounted return when no bootstrapping") {
    // gamma=1 and a critic pinned at zero: sum of targets = episode return
    std::vector<std::vector<double>> r{{1.0}, {2.0}, {-0.5}};
    std::vector<std::vector<char>> done{{0}, {0}, {1}};
    std::vector<std::vector<double>> q{{0.0}, {0.0}, {0.0}};
    auto y = td_targets(r, done, q, {0.0}, 1.0);
    double sum_y = 0, sum_r = 0;
    for (size_t t = 0; t < y.size(); ++t) {
      sum_y += y[t][0];
      sum_r += r[t][0];
    }
    CHECK(sum_y == sum_r);
  }
}

TEST_CASE("rollout_len 1 produces exactly one transition per batch slot") {
  auto rc = tiny_config("prey-small", 3);
  Trainer<double> trainer(rc);
  auto traj = trainer.rollout().collect(1, trainer.critic());
  CHECK(traj.steps.size() == 1);
  CHECK(traj.batch == 3);
  CHECK(static_cast<int>(traj.steps[0].team_reward.size()) == 3);
  CHECK(traj.bootstrap_q.size() == 3);
}

TEST_CASE("hidden state and incoming message reset at episode boundaries") {
  auto rc = tiny_config("prey-small", 1);
  rc.env_overrides = {{"horizon", 3}};
  Trainer<double> trainer(rc);
  auto traj = trainer.rollout().collect(7, trainer.critic());
  // horizon 3 forces a done inside the segment; the following step must carry
  // keep = 0 for every slot of that env
  bool saw_reset = false;
  for (size_t t = 0; t + 1 < traj.steps.size(); ++t) {
    if (traj.steps[t].done[0]) {
      saw_reset = true;
      for (int r = 0; r < traj.rows(); ++r) CHECK(traj.steps[t + 1].keep[r] == 0.0);
    }
  }
  CHECK(saw_reset);
}

TEST_CASE("trajectory rewards replay exactly through a fresh environment") {
  auto rc = tiny_config("traffic-easy", 1);
  Trainer<double> trainer(rc);
  auto traj = trainer.rollout().collect(50, trainer.critic());

  auto env = make_env(rc.env, rc.env_overrides);
  long serial = 0;
  env->reset(Rollout<double>::episode_seed(rc.seed, serial++));
  for (const auto& sd : traj.steps) {
    auto out = env->step(sd.actions);
    CHECK(out.team_reward == sd.team_reward[0]);
    CHECK((out.done ? 1 : 0) == sd.done[0]);
    if (out.done) env->reset(Rollout<double>::episode_seed(rc.seed, serial++));
  }
}

TEST_CASE("actor loss with zero critic and zero entropy sends no gradient to the action head") {
  auto rc = tiny_config("prey-small", 2);
  rc.train.entropy_coef = 0.0;
  Trainer<double> trainer(rc);
  auto traj = trainer.rollout().collect(4, trainer.critic());

  // freeze Q = 0 and targets = 0
  LossSignals frozen;
  frozen.q_values.assign(traj.steps.size(), std::vector<double>(traj.batch, 0.0));
  frozen.targets.assign(traj.steps.size(), std::vector<double>(traj.batch, 0.0));
  Tape<double> tape;
  auto losses = build_losses(tape, trainer.net(), trainer.critic(), traj, rc.train, &frozen);
  trainer.store().zero_grad();
  tape.backward(losses.actor_tensor);
  for (double g : trainer.net().action_head.w->grad) CHECK(g == 0.0);
  for (double g : trainer.net().action_head.b->grad) CHECK(g == 0.0);
}

TEST_CASE("critic and actor gradients stay isolated") {
  auto rc = tiny_config("prey-small", 2);
  Trainer<double> trainer(rc);
  // push the nets off their symmetric init so gradients are generic
  for (int i = 0; i < 3; ++i) trainer.step();
  auto traj = trainer.rollout().collect(3, trainer.critic());
  Tape<double> tape;
  auto losses = build_losses(tape, trainer.net(), trainer.critic(), traj, rc.train);

  auto is_critic = [](const std::string& name) { return name.rfind("critic.", 0) == 0; };

  SECTION("actor loss leaves critic parameters untouched") {
    trainer.store().zero_grad();
    tape.backward(losses.actor_tensor);
    for (const auto& p : trainer.store().params())
      if (is_critic(p->name))
        for (double g : p->data.grad) CHECK(g == 0.0);
  }
  SECTION("critic loss leaves policy parameters untouched") {
    trainer.store().zero_grad();
    tape.backward(losses.critic_tensor);
    bool critic_has_grad = false;
    for (const auto& p : trainer.store().params()) {
      if (!is_critic(p->name)) {
        for (double g : p->data.grad) CHECK(g == 0.0);
      } else {
        for (double g : p->data.grad) critic_has_grad = critic_has_grad || g != 0.0;
      }
    }
    CHECK(critic_has_grad);
  }
}

TEST_CASE("full actor+critic loss passes finite differences on a miniature instance") {
  // 2 agents, d_k = d_v = 2, hidden 4, 2 steps, 64-bit
  RunConfig rc;
  rc.env = "prey-small";
  rc.env_overrides = {{"agents", 2}, {"grid", 3}, {"horizon", 6}};
  rc.train.batch = 2;
  rc.train.rollout_len = 2;
  rc.train.hidden = 4;
  rc.train.enc_dim = 3;
  rc.train.critic_hidden = 4;
  rc.train.comm.d_k = 2;
  rc.train.comm.d_v = 2;
  rc.train.comm.rounds = 2;
  rc.train.comm.gating = true;
  rc.seed = 5;
  Trainer<double> trainer(rc);
  for (int i = 0; i < 2; ++i) trainer.step();  // generic parameter point
  auto traj = trainer.rollout().collect(2, trainer.critic());

  // freeze the signals at the current parameter point
  LossSignals frozen;
  {
    Tape<double> tape;
    auto base = build_losses(tape, trainer.net(), trainer.critic(), traj, rc.train);
    frozen = base.signals;
  }
  auto eval = [&](bool backward) {
    Tape<double> tape;
    auto losses = build_losses(tape, trainer.net(), trainer.critic(), traj, rc.train, &frozen);
    if (backward) {
      trainer.store().zero_grad();
      tape.backward(losses.total);
    }
    return static_cast<double>(losses.total.item());
  };

  eval(true);
  std::vector<double> analytic, numeric;
  for (const auto& p : trainer.store().params())
    analytic.insert(analytic.end(), p->data.grad.begin(), p->data.grad.end());
  for (const auto& p : trainer.store().params()) {
    auto g = oracle::finite_diff(p->data.value, [&] { return eval(false); });
    numeric.insert(numeric.end(), g.begin(), g.end());
  }
  const double err = oracle::max_rel_err(analytic, numeric);
  INFO("rel err " << err << " over " << analytic.size() << " parameters");
  CHECK(err < 1e-3);
}

TEST_CASE("lr 0 leaves parameters bit-identical") {
  auto rc = tiny_config("prey-small", 2);
  rc.train.lr = 0.0;
  Trainer<double> trainer(rc);
  std::vector<std::vector<double>> before;
  for (const auto& p : trainer.store().params()) before.push_back(p->data.value);
  for (int i = 0; i < 4; ++i) trainer.step();
  size_t k = 0;
  for (const auto& p : trainer.store().params()) CHECK(p->data.value == before[k++]);
}

TEST_CASE("single-worker training runs are bit-reproducible") {
  const fs::path dir1 = fs::temp_directory_path() / "tarmac_det1";
  const fs::path dir2 = fs::temp_directory_path() / "tarmac_det2";
  fs::remove_all(dir1);
  fs::remove_all(dir2);
  auto run = [&](const fs::path& dir) {
    auto rc = tiny_config("traffic-easy", 2, 12);
    rc.out_dir = dir.string();
    Trainer<float> trainer(rc);
    trainer.run();
  };
  run(dir1);
  run(dir2);
  CHECK(slurp(dir1 / "metrics.csv") == slurp(dir2 / "metrics.csv"));
  CHECK(slurp(dir1 / "checkpoint" / "params.bin") == slurp(dir2 / "checkpoint" / "params.bin"));
  CHECK(!slurp(dir1 / "metrics.csv").empty());
  fs::remove_all(dir1);
  fs::remove_all(dir2);
}

TEST_CASE("evaluation never touches the critic") {
  auto rc = tiny_config("prey-small", 2);
  Trainer<double> trainer(rc);
  trainer.step();
  const long calls_before = trainer.critic().forward_calls;
  auto env = make_env(rc.env, rc.env_overrides);
  auto summary = evaluate(trainer.net(), *env, 10, 99);
  CHECK(trainer.critic().forward_calls == calls_before);
  CHECK(summary.episodes == 10);
  CHECK(summary.mean_steps > 0);
}

TEST_CASE("training aborts with diagnostics on non-finite loss") {
  const fs::path dir = fs::temp_directory_path() / "tarmac_abort";
  fs::remove_all(dir);
  auto rc = tiny_config("prey-small", 2, 1000);
  rc.out_dir = dir.string();
  Trainer<double> trainer(rc);
  // poison one parameter
  trainer.store().params()[0]->data.value[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(trainer.run(), TrainAbort);
  CHECK(fs::exists(dir / "abort.json"));
  auto diag = nlohmann::json::parse(slurp(dir / "abort.json"));
  CHECK(diag.contains("iteration"));
  CHECK(diag.contains("params"));
  fs::remove_all(dir);
}

TEST_CASE("run config json round-trips") {
  auto rc = tiny_config("traffic-easy");
  rc.env_overrides = {{"horizon", 17}};
  rc.train.comm.mode = CommMode::mean_pool;
  rc.train.comm.gating = true;
  rc.train.comm.rounds = 2;
  rc.out_dir = "/tmp/x";
  nlohmann::json j = rc;
  auto back = j.get<RunConfig>();
  CHECK(back.env == rc.env);
  CHECK(back.env_overrides == rc.env_overrides);
  CHECK(back.train.comm.mode == CommMode::mean_pool);
  CHECK(back.train.comm.gating);
  CHECK(back.train.comm.rounds == 2);
  CHECK(nlohmann::json(back) == j);
  CHECK(config_hash(back) == config_hash(rc));
  rc.seed += 1;
  CHECK(config_hash(back) != config_hash(rc));
}

namespace {

// Minimal stationary bandit used for the entropy-regularization trend check:
// one agent, one step per episode, per-arm deterministic rewards.
class BanditEnv final : public Env {
 public:
  explicit BanditEnv(std::vector<double> arms) : arms_(std::move(arms)) {}
  std::string name() const override { return "bandit"; }
  int agent_count() const override { return 1; }
  int action_count() const override { return static_cast<int>(arms_.size()); }
  int obs_dim() const override { return 1; }
  int grid_size() const override { return 1; }
  int horizon() const override { return 1; }
  std::vector<std::vector<double>> reset(std::uint64_t) override {
    done_ = false;
    return {{1.0}};
  }
  EnvStep step(const std::vector<int>& actions) override {
    EnvStep out;
    out.obs = {{1.0}};
    out.rewards = {arms_[actions[0]]};
    out.team_reward = out.rewards[0];
    out.done = true;
    done_ = true;
    return out;
  }
  const std::vector<bool>& alive() const override { return alive_; }
  const std::vector<bool>& fresh() const override { return fresh_; }
  std::vector<std::array<int, 2>> agent_positions() const override { return {{0, 0}}; }
  int episode_steps() const override { return 1; }
  bool episode_success() const override { return done_; }
  nlohmann::json config_json() const override { return {{"name", "bandit"}}; }

 private:
  std::vector<double> arms_;
  std::vector<bool> alive_{true};
  std::vector<bool> fresh_{false};
  bool done_ = false;
};

double bandit_entropy_at_convergence(double entropy_coef, std::uint64_t seed) {
  ParamStore<double> store;
  PolicyLayout lay;
  lay.obs_dim = 1;
  lay.enc_dim = 4;
  lay.hidden = 6;
  lay.actions = 3;
  lay.comm.d_k = 2;
  lay.comm.d_v = 2;
  lay.comm.mode = CommMode::none;
  auto net = PolicyNet<double>::create(store, lay);
  auto critic = CriticNet<double>::create(store, 1, lay.hidden, lay.actions, 6);
  store.init_params(seed);

  TrainConfig cfg;
  cfg.batch = 8;
  cfg.rollout_len = 2;
  cfg.entropy_coef = entropy_coef;
  cfg.lr = 2e-3;
  cfg.hidden = lay.hidden;
  cfg.enc_dim = lay.enc_dim;
  cfg.comm = lay.comm;

  std::vector<std::unique_ptr<Env>> envs;
  for (int b = 0; b < cfg.batch; ++b)
    envs.push_back(std::make_unique<BanditEnv>(std::vector<double>{1.0, 0.2, 0.0}));
  Rollout<double> rollout(std::move(envs), &net, seed);
  double entropy = 0;
  for (int it = 0; it < 400; ++it) {
    auto traj = rollout.collect(cfg.rollout_len, critic);
    Tape<double> tape;
    auto losses = build_losses(tape, net, critic, traj, cfg);
    tape.backward(losses.total);
    store.rmsprop_step(cfg.lr, cfg.rmsprop_alpha, cfg.rmsprop_eps);
    entropy = losses.entropy;
  }
  return entropy;
}

}  // namespace

TEST_CASE("entropy regularization trend is monotone on a bandit") {
  const double e0 = bandit_entropy_at_convergence(0.0, 41);
  const double e1 = bandit_entropy_at_convergence(0.05, 41);
  const double e2 = bandit_entropy_at_convergence(0.5, 41);
  INFO("entropies " << e0 << " " << e1 << " " << e2);
  CHECK(e0 <= e1 + 1e-6);
  CHECK(e1 <= e2 + 1e-6);
  // soft fixed point for arms (1, 0.2, 0) at beta=0.5: pi ~ exp(r/beta),
  // entropy ~ 0.735
  CHECK(e2 == Catch::Approx(0.735).margin(0.1));
}

TEST_CASE("entropy-only loss drives the policy toward uniform") {
  auto rc = tiny_config("prey-small", 2);
  rc.train.entropy_coef = 0.1;
  Trainer<double> trainer(rc);
  // bias the action head away from uniform
  std::mt19937 rng(55);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (auto& v : trainer.net().action_head.w->value) v = d(rng);
  for (auto& v : trainer.net().action_head.b->value) v = d(rng);

  double entropy = 0;
  for (int it = 0; it < 150; ++it) {
    auto traj = trainer.rollout().collect(4, trainer.critic());
    LossSignals frozen;  // Q pinned at zero: entropy is the only signal
    frozen.q_values.assign(traj.steps.size(), std::vector<double>(traj.batch, 0.0));
    frozen.targets.assign(traj.steps.size(), std::vector<double>(traj.batch, 0.0));
    {
      Tape<double> tape;
      auto base = build_losses(tape, trainer.net(), trainer.critic(), traj, rc.train);
      frozen.critic_inputs = base.signals.critic_inputs;
    }
    Tape<double> tape;
    auto losses = build_losses(tape, trainer.net(), trainer.critic(), traj, rc.train, &frozen);
    trainer.store().zero_grad();
    tape.backward(losses.total);
    trainer.store().rmsprop_step(2e-3, 0.99, 1e-5);
    entropy = losses.entropy;
  }
  CHECK(entropy > 0.98 * std::log(5.0));  // 5 actions
}
