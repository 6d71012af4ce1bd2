#pragma once

#include <optional>
#include <random>
#include <span>
#include <vector>

#include "fedsel/nn.hpp"

#include <json.hpp>

namespace fedsel {

// A server's per-round observation over its coverage set, in canonical
// (ascending client id) order.
struct AgentState {
  std::vector<double> latencies;      // seconds, >= 0
  std::vector<double> conflict_probs; // in [0,1]
};

// S distinct clients in the order they were drawn, plus the Plackett-Luce
// log-probability of that ordered draw under the policy.
struct ActionSubset {
  std::vector<int> client_ids;
  double log_prob = 0.0;
};

struct Transition {
  AgentState state;
  ActionSubset action;
  double reward = 0.0;
  AgentState next_state;
  bool done = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(size_t capacity) : capacity_(capacity) {}

  void push(Transition t);
  std::vector<const Transition*> sample(size_t batch, std::mt19937_64& rng) const;
  size_t size() const { return data_.size(); }
  size_t capacity() const { return capacity_; }
  const std::vector<Transition>& raw() const { return data_; }
  void restore(std::vector<Transition> data, size_t head);
  size_t head() const { return head_; }

 private:
  size_t capacity_;
  size_t head_ = 0;  // next slot to overwrite once full
  std::vector<Transition> data_;
};

struct SacConfig {
  double gamma = 0.99;
  double tau = 0.005;
  double lr_critic = 3e-4;
  double lr_actor = 3e-4;
  double lr_temp = 3e-4;
  size_t replay_capacity = 50000;
  size_t batch_size = 64;
  std::vector<int> hidden = {64, 64};
  double target_entropy_scale = 0.5;  // H = -scale * S * log(coverage size)
  double reward_scale = 1.0;          // applied to rewards inside updates only
  double grad_clip = 0.0;             // 0 = off
  double init_temperature = 1.0;
  double latency_max = 40.0;          // feature scaling for latencies
};

// Per-server networks: policy (features -> per-client logits), twin critics
// (features ++ selection mask -> scalar), their targets, and the learned
// log-temperature with its target entropy.
struct SacNetworks {
  std::vector<int> coverage_ids;  // canonical client order
  int subset_size = 0;            // S
  Mlp policy, q1, q2, target_q1, target_q2;
  AdamState opt_policy, opt_q1, opt_q2;
  double log_temperature = 0.0;
  double temp_m = 0.0, temp_v = 0.0;  // Adam state for log_temperature
  long temp_step = 0;
  double target_entropy = 0.0;

  int coverage_size() const { return static_cast<int>(coverage_ids.size()); }
  double temperature() const { return std::exp(log_temperature); }
};

SacNetworks make_sac_networks(std::vector<int> coverage_ids, int subset_size,
                              const SacConfig& cfg, std::mt19937_64& rng);

// Latencies scaled by 1/latency_max, concatenated with conflict probabilities.
std::vector<double> encode_state(const AgentState& s, double latency_max);

enum class SelectMode { kExplore, kGreedy };

// Explore: sequential softmax sampling without replacement over the logits.
// Greedy: top-S logits, ties broken by lower client id. Both return real
// client ids from the coverage set.
ActionSubset select_action(const SacNetworks& nets, const AgentState& state, int subset_size,
                           SelectMode mode, const SacConfig& cfg, std::mt19937_64& rng);

// f = tanh(mean / (population std + epsilon)) over participation counts.
double fairness_metric(std::span<const long> participation_counts, double epsilon);

// r = -latency - conflict_penalty + alpha * fairness
double compute_reward(double round_latency, double conflict_penalty, double fairness,
                      double alpha);

// --- Plackett-Luce primitives (index space) ---

// Samples `count` distinct indices sequentially from softmax over the
// remaining logits; returns the drawn order and its summed log-probability.
std::pair<std::vector<int>, double> pl_sample(std::span<const double> logits, int count,
                                              std::mt19937_64& rng);

// Log-probability of drawing `order` (ordered, distinct) under the logits.
double pl_log_prob(std::span<const double> logits, std::span<const int> order);

// d(log_prob)/d(logits).
std::vector<double> pl_log_prob_grad(std::span<const double> logits, std::span<const int> order);

// --- Updates ---

struct UpdateDiagnostics {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double temperature_loss = 0.0;
  double entropy_estimate = 0.0;  // mean of -log pi over the actor's samples
  double temperature = 0.0;
};

// Steps both critics toward y = r + gamma*(min target Q - eta*log pi(a'|s'))
// with a' freshly sampled at s'; returns the mean squared Bellman error
// (average of the two critics) before the step.
double update_critics(SacNetworks& nets, std::span<const Transition* const> batch,
                      const SacConfig& cfg, std::mt19937_64& rng);

// REINFORCE-style step on E[eta*log pi(a|s) - min Q(s,a)] with one fresh
// sample per state; returns the loss value and an entropy estimate.
std::pair<double, double> update_actor(SacNetworks& nets, std::span<const AgentState* const> states,
                                       const SacConfig& cfg, std::mt19937_64& rng);

// Steps log-temperature on L(eta) = E[-eta * (log pi(a|s) + H)].
double update_temperature(SacNetworks& nets, std::span<const AgentState* const> states,
                          const SacConfig& cfg, std::mt19937_64& rng);

void polyak_targets(SacNetworks& nets, double tau);

// --- Deterministic internals, exposed for direct loss/gradient testing ---

// Critic input: encoded state features concatenated with the selection mask.
std::vector<double> critic_input(const SacNetworks& nets, const AgentState& s,
                                 std::span<const int> client_ids, double latency_max);

// Mean over the batch of (Q(s,a) - y)^2 for one critic; accumulates dLoss/dparams.
double critic_loss_and_grads(const Mlp& critic, const std::vector<std::vector<double>>& inputs,
                             std::span<const double> targets, GradientSet* grads);

// Mean over the batch of coeff_i * log pi(a_i|s_i); accumulates dLoss/dparams.
// This is the surrogate the actor step differentiates.
double actor_surrogate_and_grads(const Mlp& policy, const std::vector<std::vector<double>>& features,
                                 const std::vector<std::vector<int>>& orders,
                                 std::span<const double> coeffs, GradientSet* grads);

// L(log_eta) = mean of -exp(log_eta) * (log_probs + target_entropy).
double temperature_loss(double log_eta, std::span<const double> log_probs, double target_entropy);

nlohmann::json sac_to_json(const SacNetworks& nets);
SacNetworks sac_from_json(const nlohmann::json& j);

}  // namespace fedsel
