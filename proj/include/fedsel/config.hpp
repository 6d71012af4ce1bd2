#pragma once

#include <string>
#include <vector>

#include "fedsel/env.hpp"
#include "fedsel/fl.hpp"
#include "fedsel/sac.hpp"

namespace fedsel {

enum class PolicyKind { kRlCrp, kRlCrpNoFairness, kRandomFedavg, kSacNoCrp };

std::string policy_name(PolicyKind k);
PolicyKind parse_policy(const std::string& s);

// Everything a run needs; (config, master_seed) fully determines all outputs.
struct ExperimentConfig {
  // topology
  int num_servers = 2;
  int num_clients = 50;
  int covered_target = 40;
  double coverage_radius_km = 1.0;
  double server_spacing_km = 1.0;
  uint64_t placement_seed = 1;
  double compute_rate_min = 50.0;
  double compute_rate_max = 500.0;

  // channel
  double pathloss_exponent = 3.5;
  double tx_power = 1.0;
  double noise_power = 0.1;
  double min_distance_km = 0.01;
  std::string fading = "rayleigh";  // rayleigh | none

  // synthetic task + partition
  int synth_classes = 4;
  int synth_dim = 8;
  int synth_samples = 2000;
  int synth_test_samples = 500;
  double synth_spread = 1.0;
  std::string partition = "dirichlet";  // dirichlet | iid
  double dirichlet_eta = 0.1;
  std::vector<int> model_hidden;  // empty -> multinomial logistic model
  int batch_size = 16;
  int local_epochs = 5;
  double learning_rate = 0.005;
  double model_size_bits = 1e6;

  // selection + environment
  int select_count = 5;  // S
  double total_bandwidth_hz = 1e8;
  double latency_max_s = 40.0;
  double alpha_fairness = 100.0;
  double conflict_penalty_beta = 10.0;
  std::string conflict_mode = "winner_by_snr";  // winner_by_snr | all_fail
  double waterfill_headroom = 0.8;
  double waterfill_min_unit_hz = 0.0;

  // SAC
  double sac_gamma = 0.99;
  double sac_tau = 0.005;
  double sac_lr_critic = 3e-4;
  double sac_lr_actor = 3e-4;
  double sac_lr_temp = 3e-4;
  int sac_replay_capacity = 50000;
  int sac_batch_size = 64;
  std::vector<int> sac_hidden = {64, 64};
  int sac_warmup_rounds = 200;
  int sac_updates_per_round = 1;
  double sac_target_entropy_scale = 0.5;
  double sac_reward_scale = 1.0;
  double sac_grad_clip = 0.0;
  double sac_init_temperature = 1.0;

  // HMM
  int hmm_states = 2;
  double hmm_rho = 0.1;
  double hmm_smoothing = 1e-6;
  int hmm_update_every = 1;

  // run control
  std::string policy = "rl_crp";
  long rounds = 1000;
  int eval_every = 10;
  uint64_t master_seed = 1;
  int num_tasks = 1;
  bool reset_participation_per_task = false;
  long checkpoint_every = 0;  // 0 = no periodic checkpoints

  PolicyKind policy_kind() const { return parse_policy(policy); }
  TopologySpec topology_spec() const;
  ChannelModel channel_model() const;
  TrainConfig train_config() const;
  SacConfig sac_config() const;
  std::vector<int> task_model_layers() const;
};

// Flat key = value text; '#' starts a comment. Unknown keys are errors.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Canonical serialization (fixed key order) used for hashing and shipping.
std::string config_to_text(const ExperimentConfig& cfg);

// FNV-1a of the canonical text.
std::string config_hash(const ExperimentConfig& cfg);

// Same, with the policy key excluded: runs that may be compared against each
// other share this hash.
std::string comparable_hash(const ExperimentConfig& cfg);

void validate_config(const ExperimentConfig& cfg);

}  // namespace fedsel
