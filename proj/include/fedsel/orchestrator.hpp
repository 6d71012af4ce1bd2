#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fedsel/config.hpp"
#include "fedsel/env.hpp"
#include "fedsel/fl.hpp"
#include "fedsel/hmm.hpp"
#include "fedsel/metrics.hpp"
#include "fedsel/sac.hpp"

#include <json.hpp>

namespace fedsel {

// A seeded experiment: one world, one policy, T rounds per task.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig cfg);

  // Advances a single round (1-based within the current task).
  RoundOutcome step();

  // Runs every remaining round of every task; when out_dir is non-empty,
  // streams metrics.csv there and writes metrics.json, config.cfg and (if
  // configured) checkpoints.
  void run_all(const std::string& out_dir = "");

  const MetricsLog& metrics() const { return metrics_; }
  long current_round() const { return round_; }
  int current_task() const { return task_; }
  const ExperimentConfig& config() const { return cfg_; }
  const Topology& topology() const { return topo_; }

  // Latest per-server evaluation accuracy (NaN before the first evaluation).
  const std::vector<double>& last_accuracy() const { return last_accuracy_; }

  nlohmann::json to_checkpoint() const;
  static Experiment from_checkpoint(const nlohmann::json& j);
  void save_checkpoint(const std::string& path) const;
  static Experiment load_checkpoint(const std::string& path);

  // Re-attaches previously exported rows when resuming (hashes must match).
  void restore_metrics(MetricsLog log);

  // Exposed for invariant tests.
  const std::vector<std::vector<SelectionHistory>>& histories() const { return history_; }

 private:
  struct Pending {
    AgentState state;
    ActionSubset action;
    double reward = 0.0;
  };

  Experiment() = default;
  void build_world();
  void start_task(int task);

  ExperimentConfig cfg_;
  PolicyKind kind_ = PolicyKind::kRlCrp;
  Topology topo_;
  Dataset train_data_, test_data_;
  std::vector<ClientDataset> client_data_;
  std::vector<double> compute_time_;  // per client, n_k * epochs / rate

  std::vector<Mlp> models_;
  std::vector<SacNetworks> agents_;
  std::vector<ReplayBuffer> replay_;
  std::vector<std::vector<long>> participation_;
  std::vector<std::vector<HmmParams>> hmm_;
  std::vector<std::vector<SelectionHistory>> history_;
  std::vector<std::optional<Pending>> pending_;
  std::vector<std::mt19937_64> action_rng_, update_rng_;

  std::vector<double> last_accuracy_;
  std::vector<double> last_critic_loss_, last_actor_loss_, last_temp_loss_, last_entropy_;

  long round_ = 0;  // rounds completed in the current task
  int task_ = 0;
  MetricsLog metrics_;
  MetricsWriter writer_;
};

MetricsLog run_experiment(const ExperimentConfig& cfg, const std::string& out_dir = "");

// Final-window summary per policy, used by the CLI `compare` subcommand.
struct PolicySummary {
  std::string policy;
  double mean_reward_final_window = 0.0;
  double mean_conflicts_per_round = 0.0;
  double final_accuracy = 0.0;
  double participation_cv = 0.0;
};

// Every log must share the same comparable hash (same topology/seed, policy
// aside); `window` is the number of trailing rounds for the reward column.
std::vector<PolicySummary> compare_policies(const std::vector<MetricsLog>& logs, long window);

std::string summaries_to_csv(const std::vector<PolicySummary>& summaries);

// Mean over servers of a per-round quantity, ordered by round (single task).
std::vector<double> per_round_mean(const MetricsLog& log, const std::string& column);

}  // namespace fedsel
