// Command-line front end: training runs, decentralized evaluation, the
// message-size x rounds sweep, and spatial/correlation analyses over
// attention logs.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "tarmac/analysis/analysis.hpp"
#include "tarmac/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace tarmac;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct CommonFlags {
  std::string config_file;
  std::string env;
  std::string comm = "";
  int rounds = -1;
  int msg_dim = -1;
  int dk = -1;
  bool gating = false;
  bool no_self_attention = false;
  std::uint64_t seed = 0;
  bool seed_set = false;
  long episodes = -1;
  std::string out;
  // env overrides
  int grid = -1, agents = -1, horizon = -1, vision = -1, n_max = -1;
  double p_arrive = -1, cell_prob = -1;
  std::string goals;
  // trainer overrides
  double lr = -1, gamma = -1, entropy_coef = -1, value_coef = -1, grad_clip = -1;
  int batch = -1, rollout_len = -1, hidden = -1, enc_dim = -1, critic_hidden = -1;
  bool advantage = false, normalize_advantage = false;
  long eval_every = -1;
  int eval_episodes = -1, metrics_every = -1, attention_every = -1;
  bool curriculum = false, greedy_eval = false;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_file, "JSON run config; flags override file values");
  cmd->add_option("--env", f.env,
                  "environment: shapes, traffic-easy, traffic-hard, prey-small, prey-medium, "
                  "prey-large");
  cmd->add_option("--comm", f.comm, "communication mode: targeted | mean | none");
  cmd->add_option("--rounds", f.rounds, "communication rounds per timestep");
  cmd->add_option("--msg-dim", f.msg_dim, "message value dimension d_v");
  cmd->add_option("--dk", f.dk, "signature/query dimension d_k");
  cmd->add_flag("--gating", f.gating, "hard gating of outgoing messages");
  cmd->add_flag("--no-self-attention", f.no_self_attention, "exclude self from the softmax");
  auto* s = cmd->add_option("--seed", f.seed, "master seed");
  s->each([&f](const std::string&) { f.seed_set = true; });
  cmd->add_option("--episodes", f.episodes, "total training episodes");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--grid", f.grid, "grid size override");
  cmd->add_option("--agents", f.agents, "agent count override");
  cmd->add_option("--horizon", f.horizon, "episode horizon override");
  cmd->add_option("--vision", f.vision, "prey vision radius override");
  cmd->add_option("--n-max", f.n_max, "traffic car cap override");
  cmd->add_option("--p-arrive", f.p_arrive, "traffic arrival probability override");
  cmd->add_option("--cell-prob", f.cell_prob, "shapes cell fill probability");
  cmd->add_option("--goals", f.goals, "shapes goals, e.g. \"red\" or \"red,red,green,blue\"");
  cmd->add_option("--lr", f.lr, "learning rate");
  cmd->add_option("--batch", f.batch, "environment batch size");
  cmd->add_option("--gamma", f.gamma, "discount factor");
  cmd->add_option("--entropy-coef", f.entropy_coef, "entropy regularization coefficient");
  cmd->add_option("--value-coef", f.value_coef, "critic loss weight");
  cmd->add_option("--grad-clip", f.grad_clip, "gradient norm clip (0 = off)");
  cmd->add_flag("--advantage", f.advantage, "weight log-probs by the TD advantage (y - Q)");
  cmd->add_flag("--normalize-advantage", f.normalize_advantage,
                "standardize actor weights per segment");
  cmd->add_option("--rollout-len", f.rollout_len, "rollout segment length");
  cmd->add_option("--hidden", f.hidden, "GRU hidden size");
  cmd->add_option("--enc-dim", f.enc_dim, "observation encoder width");
  cmd->add_option("--critic-hidden", f.critic_hidden, "critic hidden width");
  cmd->add_option("--eval-every", f.eval_every, "episodes between eval checkpoints");
  cmd->add_option("--eval-episodes", f.eval_episodes, "episodes per evaluation");
  cmd->add_option("--metrics-every", f.metrics_every, "iterations between metric rows");
  cmd->add_option("--attention-every", f.attention_every, "log attention every k-th episode");
  cmd->add_flag("--curriculum", f.curriculum, "ramp traffic p_arrive linearly");
  cmd->add_flag("--greedy-eval", f.greedy_eval, "greedy action selection at evaluation");
}

RunConfig merge_config(const CommonFlags& f) {
  RunConfig rc;
  if (!f.config_file.empty()) rc = load_run_config(f.config_file);
  if (!f.env.empty()) rc.env = f.env;
  if (!f.comm.empty()) rc.train.comm.mode = comm_mode_from(f.comm);
  if (f.rounds > 0) rc.train.comm.rounds = f.rounds;
  if (f.msg_dim > 0) rc.train.comm.d_v = f.msg_dim;
  if (f.dk > 0) rc.train.comm.d_k = f.dk;
  if (f.gating) rc.train.comm.gating = true;
  if (f.no_self_attention) rc.train.comm.self_attention = false;
  if (f.seed_set) rc.seed = f.seed;
  if (f.episodes > 0) rc.train.total_episodes = f.episodes;
  if (!f.out.empty()) rc.out_dir = f.out;
  if (f.grid > 0) rc.env_overrides["grid"] = f.grid;
  if (f.agents > 0) rc.env_overrides["agents"] = f.agents;
  if (f.horizon > 0) rc.env_overrides["horizon"] = f.horizon;
  if (f.vision >= 0) rc.env_overrides["vision"] = f.vision;
  if (f.n_max > 0) rc.env_overrides["n_max"] = f.n_max;
  if (f.p_arrive >= 0) rc.env_overrides["p_arrive"] = f.p_arrive;
  if (f.cell_prob >= 0) rc.env_overrides["cell_prob"] = f.cell_prob;
  if (!f.goals.empty()) rc.env_overrides["goals"] = f.goals;
  if (f.lr >= 0) rc.train.lr = f.lr;
  if (f.batch > 0) rc.train.batch = f.batch;
  if (f.gamma >= 0) rc.train.gamma = f.gamma;
  if (f.entropy_coef >= 0) rc.train.entropy_coef = f.entropy_coef;
  if (f.value_coef >= 0) rc.train.value_loss_coef = f.value_coef;
  if (f.grad_clip >= 0) rc.train.grad_clip = f.grad_clip;
  if (f.advantage) rc.train.advantage_actor = true;
  if (f.normalize_advantage) rc.train.normalize_advantage = true;
  if (f.rollout_len > 0) rc.train.rollout_len = f.rollout_len;
  if (f.hidden > 0) rc.train.hidden = f.hidden;
  if (f.enc_dim > 0) rc.train.enc_dim = f.enc_dim;
  if (f.critic_hidden > 0) rc.train.critic_hidden = f.critic_hidden;
  if (f.eval_every >= 0) rc.train.eval_every = f.eval_every;
  if (f.eval_episodes > 0) rc.train.eval_episodes = f.eval_episodes;
  if (f.metrics_every > 0) rc.train.metrics_every = f.metrics_every;
  if (f.attention_every >= 0) rc.train.attention_log_every = f.attention_every;
  if (f.curriculum) rc.train.curriculum = true;
  if (f.greedy_eval) rc.train.greedy_eval = true;
  rc.validate();
  return rc;
}

nlohmann::json summary_json(const EvalSummary& s) {
  return {{"episodes", s.episodes},
          {"success_rate", s.success_rate},
          {"success_se", s.success_se},
          {"mean_steps", s.mean_steps},
          {"mean_reward", s.mean_reward}};
}

int cmd_train(const CommonFlags& flags) {
  RunConfig rc = merge_config(flags);
  if (rc.out_dir.empty()) {
    std::cerr << "train: --out is required\n";
    return kExitConfig;
  }
  Trainer<float> trainer(rc);
  auto outcome = trainer.run(&std::cout);
  std::cout << "trained " << outcome.episodes << " episodes in " << outcome.iterations
            << " iterations\n"
            << "final eval: success " << outcome.final_eval.success_rate << " +- "
            << outcome.final_eval.success_se << ", steps " << outcome.final_eval.mean_steps
            << ", reward " << outcome.final_eval.mean_reward << "\n"
            << "run dir: " << outcome.run_dir << " (config hash " << config_hash(rc) << ")\n";
  return kExitOk;
}

int cmd_eval(const std::string& run_dir, const CommonFlags& flags, int seeds,
             const std::string& out_json, const std::string& trace_path,
             const std::string& attention_path) {
  if (run_dir.empty()) {
    std::cerr << "eval: --run is required\n";
    return kExitConfig;
  }
  nlohmann::json overrides = nlohmann::json::object();
  if (flags.grid > 0) overrides["grid"] = flags.grid;
  if (flags.agents > 0) overrides["agents"] = flags.agents;
  if (flags.horizon > 0) overrides["horizon"] = flags.horizon;
  if (flags.vision >= 0) overrides["vision"] = flags.vision;
  if (flags.p_arrive >= 0) overrides["p_arrive"] = flags.p_arrive;
  const int episodes = flags.eval_episodes > 0 ? flags.eval_episodes : 100;
  const std::uint64_t seed0 = flags.seed_set ? flags.seed : 1;

  std::unique_ptr<AttentionLogger> alog;
  std::unique_ptr<TraceLogger> trace;
  if (!attention_path.empty()) alog = std::make_unique<AttentionLogger>(attention_path);
  if (!trace_path.empty()) trace = std::make_unique<TraceLogger>(trace_path);

  std::vector<EvalSummary> runs;
  for (int s = 0; s < std::max(1, seeds); ++s)
    runs.push_back(evaluate_run_dir<float>(run_dir, flags.env, overrides, episodes, seed0 + s,
                                           flags.greedy_eval, alog.get(), 1, trace.get()));
  if (alog) alog->flush();

  nlohmann::json out;
  out["config"] = nlohmann::json(load_run_config(fs::path(run_dir) / "config.json"));
  if (runs.size() == 1) {
    out["results"] = summary_json(runs[0]);
    std::cout << "success " << runs[0].success_rate << " +- " << runs[0].success_se << ", steps "
              << runs[0].mean_steps << ", reward " << runs[0].mean_reward << " over "
              << runs[0].episodes << " episodes\n";
  } else {
    double mean = 0, mean_steps = 0, mean_reward = 0;
    for (const auto& r : runs) {
      mean += r.success_rate;
      mean_steps += r.mean_steps;
      mean_reward += r.mean_reward;
    }
    mean /= runs.size();
    mean_steps /= runs.size();
    mean_reward /= runs.size();
    double var = 0;
    for (const auto& r : runs) var += (r.success_rate - mean) * (r.success_rate - mean);
    const double sem = runs.size() > 1 ? std::sqrt(var / (runs.size() - 1) / runs.size()) : 0;
    out["results"] = {{"seeds", runs.size()},      {"success_mean", mean},
                      {"success_sem", sem},        {"mean_steps", mean_steps},
                      {"mean_reward", mean_reward}, {"episodes_per_seed", episodes}};
    auto& per_seed = out["results"]["per_seed"] = nlohmann::json::array();
    for (const auto& r : runs) per_seed.push_back(summary_json(r));
    std::cout << "success " << mean << " +- " << sem << " (SEM over " << runs.size()
              << " seeds), steps " << mean_steps << ", reward " << mean_reward << "\n";
  }
  if (!out_json.empty()) {
    fs::path p(out_json);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::trunc);
    f << out.dump(2) << "\n";
  }
  return kExitOk;
}

int cmd_analyze(const std::string& log_path, const std::string& kind, int grid, double threshold,
                int shift, const std::string& out_csv) {
  auto log = load_attention_log(log_path);
  if (kind == "correlation") {
    auto res = attended_correlation(log, threshold, shift);
    if (res.rho.has_value())
      std::cout << "spearman rho = " << *res.rho << " over " << res.pairs << " pairs (threshold "
                << threshold << ", shift " << shift << ")\n";
    else
      std::cout << "spearman rho undefined (constant series) over " << res.pairs << " pairs\n";
    return kExitOk;
  }
  if (grid <= 0) {
    std::cerr << "analyze: --grid is required for spatial kinds\n";
    return kExitConfig;
  }
  auto grid_out = spatial_aggregate(log, kind, grid);
  if (out_csv.empty()) {
    grid_out.write_csv(std::cout);
  } else {
    fs::path p(out_csv);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::trunc);
    grid_out.write_csv(f);
    std::cout << "wrote " << out_csv << "\n";
  }
  return kExitOk;
}

int cmd_sweep(const CommonFlags& flags, const std::vector<int>& msg_dims,
              const std::vector<int>& rounds_list, int jobs) {
  RunConfig base = merge_config(flags);
  if (base.out_dir.empty()) {
    std::cerr << "sweep: --out is required\n";
    return kExitConfig;
  }
  struct Cell {
    int msg_dim, rounds;
    RunConfig rc;
    EvalSummary result;
    std::string hash;
  };
  std::vector<Cell> cells;
  for (int dv : msg_dims)
    for (int r : rounds_list) {
      Cell cell;
      cell.msg_dim = dv;
      cell.rounds = r;
      cell.rc = base;
      cell.rc.train.comm.d_v = dv;
      cell.rc.train.comm.rounds = r;
      cell.hash = config_hash(cell.rc);
      cell.rc.out_dir =
          (fs::path(base.out_dir) / ("cell-" + std::to_string(dv) + "x" + std::to_string(r)))
              .string();
      cells.push_back(std::move(cell));
    }

  std::mutex mu;
  size_t next = 0;
  auto worker = [&] {
    for (;;) {
      size_t mine;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= cells.size()) return;
        mine = next++;
      }
      Trainer<float> trainer(cells[mine].rc);
      cells[mine].result = trainer.run(nullptr).final_eval;
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::ofstream csv(fs::path(base.out_dir) / "sweep.csv", std::ios::trunc);
  csv << "msg_dim,rounds,success_rate,mean_steps,mean_reward,config_hash,run_dir\n";
  std::cout << "msg_dim rounds success steps reward hash\n";
  for (const auto& cell : cells) {
    csv << cell.msg_dim << "," << cell.rounds << "," << cell.result.success_rate << ","
        << cell.result.mean_steps << "," << cell.result.mean_reward << "," << cell.hash << ","
        << cell.rc.out_dir << "\n";
    std::cout << cell.msg_dim << " " << cell.rounds << " " << cell.result.success_rate << " "
              << cell.result.mean_steps << " " << cell.result.mean_reward << " " << cell.hash
              << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"targeted multi-agent communication lab"};
  app.require_subcommand(1);

  CommonFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "train a policy");
  add_common_flags(train_cmd, train_flags);

  CommonFlags eval_flags;
  std::string run_dir, out_json, trace_path, attention_path;
  int eval_seeds = 1;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint (decentralized)");
  add_common_flags(eval_cmd, eval_flags);
  eval_cmd->add_option("--run", run_dir, "run directory containing config.json + checkpoint/");
  eval_cmd->add_option("--seeds", eval_seeds, "evaluation seeds to aggregate (mean +- SEM)");
  eval_cmd->add_option("--out-json", out_json, "write the summary JSON here");
  eval_cmd->add_option("--trace", trace_path, "write a per-timestep rollout trace JSONL");
  eval_cmd->add_option("--attention-log", attention_path, "write attention records JSONL");

  std::string an_log, an_kind = "attention", an_csv;
  int an_grid = 0, an_shift = 0;
  double an_threshold = 0.1;
  auto* an_cmd = app.add_subcommand("analyze", "aggregate attention logs");
  an_cmd->add_option("--log", an_log, "attention JSONL path")->required();
  an_cmd->add_option("--kind", an_kind, "brake | attention | correlation");
  an_cmd->add_option("--grid", an_grid, "grid size for spatial maps");
  an_cmd->add_option("--threshold", an_threshold, "attention threshold for correlation");
  an_cmd->add_option("--shift", an_shift, "time shift for correlation");
  an_cmd->add_option("--out-csv", an_csv, "write the per-cell CSV here");

  CommonFlags sweep_flags;
  std::vector<int> msg_dims{1, 32, 64};
  std::vector<int> rounds_list{1, 2};
  int jobs = 1;
  auto* sweep_cmd = app.add_subcommand("sweep", "message-size x rounds grid");
  add_common_flags(sweep_cmd, sweep_flags);
  sweep_cmd->add_option("--msg-dims", msg_dims, "message sizes to sweep");
  sweep_cmd->add_option("--rounds-list", rounds_list, "round counts to sweep");
  sweep_cmd->add_option("--jobs", jobs, "parallel workers (cells are independent)");

  try {
    app.parse(argc, argv);
    if (train_cmd->parsed()) return cmd_train(train_flags);
    if (eval_cmd->parsed())
      return cmd_eval(run_dir, eval_flags, eval_seeds, out_json, trace_path, attention_path);
    if (an_cmd->parsed())
      return cmd_analyze(an_log, an_kind, an_grid, an_threshold, an_shift, an_csv);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_flags, msg_dims, rounds_list, jobs);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  } catch (const TrainAbort& e) {
    std::cerr << e.what() << "\n" << e.diagnostics.dump(2) << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
