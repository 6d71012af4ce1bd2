// fedsel — multi-server federated learning client-selection simulator.
//
// Subcommands:
//   run      one seeded experiment, metrics to --out
//   sweep    grid over server counts x policies x seeds, plus a summary CSV
//   compare  final-window table across runs that share topology and seed
//   plot     SVG curves (reward / accuracy / conflicts) from metrics CSVs

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "fedsel/orchestrator.hpp"
#include "fedsel/svg.hpp"

namespace fs = std::filesystem;
using namespace fedsel;

namespace {

ExperimentConfig load_or_default(const std::string& path) {
  if (path.empty()) return ExperimentConfig{};
  return load_config(path);
}

int cmd_run(const std::string& config_path, long seed, const std::string& out_dir,
            const std::string& policy, long rounds, const std::string& resume) {
  ExperimentConfig cfg = load_or_default(config_path);
  if (seed >= 0) cfg.master_seed = static_cast<uint64_t>(seed);
  if (!policy.empty()) cfg.policy = policy;
  if (rounds >= 0) cfg.rounds = rounds;
  validate_config(cfg);

  if (!resume.empty()) {
    Experiment e = Experiment::load_checkpoint(resume);
    if (!out_dir.empty()) {
      const fs::path csv = fs::path(out_dir) / "metrics.csv";
      if (fs::exists(csv)) e.restore_metrics(read_metrics_csv(csv.string()));
    }
    e.run_all(out_dir);
    std::cout << "resumed run complete: " << e.metrics().rows.size() << " rows\n";
    return 0;
  }

  const MetricsLog log = run_experiment(cfg, out_dir);
  std::cout << "run complete: policy=" << cfg.policy << " rounds=" << cfg.rounds
            << " rows=" << log.rows.size() << "\n";
  if (!out_dir.empty()) std::cout << "metrics: " << (fs::path(out_dir) / "metrics.csv") << "\n";
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::vector<int>& servers,
              const std::vector<std::string>& policies, const std::vector<long>& seeds,
              const std::string& out_dir) {
  ExperimentConfig base = load_or_default(config_path);
  fs::create_directories(out_dir);

  std::string summary = "servers,policy,seed,mean_conflicts_per_round,mean_reward_final_window,"
                        "final_accuracy\n";
  for (int m : servers) {
    for (const std::string& p : policies) {
      for (long s : seeds) {
        ExperimentConfig cfg = base;
        cfg.num_servers = m;
        cfg.policy = p;
        cfg.master_seed = static_cast<uint64_t>(s);
        validate_config(cfg);
        const std::string run_dir =
            (fs::path(out_dir) / ("run_m" + std::to_string(m) + "_" + p + "_s" + std::to_string(s)))
                .string();
        const MetricsLog log = run_experiment(cfg, run_dir);
        const auto sums = compare_policies({log}, std::min<long>(cfg.rounds, 200));
        summary += std::to_string(m) + "," + p + "," + std::to_string(s) + "," +
                   format_g17(sums[0].mean_conflicts_per_round) + "," +
                   format_g17(sums[0].mean_reward_final_window) + "," +
                   format_g17(sums[0].final_accuracy) + "\n";
        std::cout << "done: M=" << m << " policy=" << p << " seed=" << s << "\n";
      }
    }
  }
  std::ofstream out(fs::path(out_dir) / "summary.csv");
  out << summary;
  std::cout << "summary: " << (fs::path(out_dir) / "summary.csv") << "\n";
  return 0;
}

int cmd_compare(const std::vector<std::string>& run_dirs, long window, const std::string& out) {
  std::vector<MetricsLog> logs;
  for (const std::string& d : run_dirs) {
    fs::path p = fs::path(d);
    if (fs::is_directory(p)) p /= "metrics.csv";
    logs.push_back(read_metrics_csv(p.string()));
  }
  const auto summaries = compare_policies(logs, window);
  const std::string csv = summaries_to_csv(summaries);
  std::cout << csv;
  if (!out.empty()) {
    std::ofstream f(out);
    f << csv;
  }
  return 0;
}

int cmd_plot(const std::vector<std::string>& metrics_paths, const std::string& column, int smooth,
             const std::string& out) {
  std::vector<Curve> curves;
  for (const std::string& p : metrics_paths) {
    const MetricsLog log = read_metrics_csv(p);
    Curve c;
    c.label = log.policy.empty() ? fs::path(p).parent_path().filename().string() : log.policy;
    c.values = smooth_curve(per_round_mean(log, column), smooth);
    curves.push_back(std::move(c));
  }
  write_svg(curves, column + " per round", column, out);
  std::cout << "wrote " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-server FL client-selection simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir, policy, resume, compare_out, plot_out;
  long seed = -1, rounds = -1, window = 200;
  std::vector<int> servers = {2, 3, 4};
  std::vector<std::string> policies = {"rl_crp", "rl_crp_no_fairness", "random_fedavg",
                                       "sac_no_crp"};
  std::vector<long> seeds = {1};
  std::vector<std::string> run_dirs, metrics_paths;
  std::string column = "reward";
  int smooth = 1;

  auto* run = app.add_subcommand("run", "run one experiment");
  run->add_option("--config", config_path, "config file (flat key = value)");
  run->add_option("--seed", seed, "master seed override");
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--policy", policy, "rl_crp | rl_crp_no_fairness | random_fedavg | sac_no_crp");
  run->add_option("--rounds", rounds, "rounds override");
  run->add_option("--resume", resume, "checkpoint.json to resume from");

  auto* sweep = app.add_subcommand("sweep", "grid over server counts, policies, seeds");
  sweep->add_option("--config", config_path, "base config file");
  sweep->add_option("--servers", servers, "server counts")->delimiter(',');
  sweep->add_option("--policies", policies, "policies")->delimiter(',');
  sweep->add_option("--seeds", seeds, "master seeds")->delimiter(',');
  sweep->add_option("--out", out_dir, "output directory")->required();

  auto* compare = app.add_subcommand("compare", "summarize runs sharing topology and seed");
  compare->add_option("--runs", run_dirs, "run directories (or metrics.csv paths)")
      ->required()
      ->expected(-1);
  compare->add_option("--window", window, "trailing rounds for the reward column");
  compare->add_option("--out", compare_out, "also write the table to this CSV");

  auto* plot = app.add_subcommand("plot", "SVG curves from metrics CSVs");
  plot->add_option("--metrics", metrics_paths, "metrics.csv paths")->required()->expected(-1);
  plot->add_option("--column", column, "reward | accuracy | conflicts | latency | fairness");
  plot->add_option("--smooth", smooth, "moving-average window");
  plot->add_option("--out", plot_out, "output SVG path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, seed, out_dir, policy, rounds, resume);
    if (sweep->parsed()) return cmd_sweep(config_path, servers, policies, seeds, out_dir);
    if (compare->parsed()) return cmd_compare(run_dirs, window, compare_out);
    if (plot->parsed()) return cmd_plot(metrics_paths, column, smooth, plot_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
