#include "fedsel/sac.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fedsel {

void ReplayBuffer::push(Transition t) {
  if (capacity_ == 0) return;
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[head_] = std::move(t);
    head_ = (head_ + 1) % capacity_;
  }
}

std::vector<const Transition*> ReplayBuffer::sample(size_t batch, std::mt19937_64& rng) const {
  if (data_.size() < batch) throw std::runtime_error("replay buffer underfilled");
  std::uniform_int_distribution<size_t> pick(0, data_.size() - 1);
  std::vector<const Transition*> out;
  out.reserve(batch);
  for (size_t i = 0; i < batch; ++i) out.push_back(&data_[pick(rng)]);
  return out;
}

void ReplayBuffer::restore(std::vector<Transition> data, size_t head) {
  if (data.size() > capacity_) throw std::invalid_argument("restore: exceeds capacity");
  data_ = std::move(data);
  head_ = head;
}

SacNetworks make_sac_networks(std::vector<int> coverage_ids, int subset_size,
                              const SacConfig& cfg, std::mt19937_64& rng) {
  const int n = static_cast<int>(coverage_ids.size());
  if (n <= 0) throw std::invalid_argument("make_sac_networks: empty coverage set");
  if (subset_size <= 0 || subset_size > n)
    throw std::invalid_argument("make_sac_networks: invalid subset size");

  SacNetworks nets;
  nets.coverage_ids = std::move(coverage_ids);
  nets.subset_size = subset_size;

  std::vector<int> policy_sizes;
  policy_sizes.push_back(2 * n);
  for (int h : cfg.hidden) policy_sizes.push_back(h);
  policy_sizes.push_back(n);

  std::vector<int> critic_sizes;
  critic_sizes.push_back(3 * n);
  for (int h : cfg.hidden) critic_sizes.push_back(h);
  critic_sizes.push_back(1);

  nets.policy = make_mlp(policy_sizes, rng);
  nets.q1 = make_mlp(critic_sizes, rng);
  nets.q2 = make_mlp(critic_sizes, rng);
  nets.target_q1 = nets.q1;
  nets.target_q2 = nets.q2;
  nets.opt_policy = make_adam_state(nets.policy);
  nets.opt_q1 = make_adam_state(nets.q1);
  nets.opt_q2 = make_adam_state(nets.q2);
  nets.log_temperature = std::log(cfg.init_temperature);
  nets.target_entropy =
      -cfg.target_entropy_scale * subset_size * std::log(static_cast<double>(n));
  return nets;
}

std::vector<double> encode_state(const AgentState& s, double latency_max) {
  if (s.latencies.size() != s.conflict_probs.size())
    throw std::invalid_argument("encode_state: length mismatch");
  std::vector<double> f;
  f.reserve(2 * s.latencies.size());
  for (double v : s.latencies) f.push_back(v / latency_max);
  for (double v : s.conflict_probs) f.push_back(v);
  return f;
}

std::pair<std::vector<int>, double> pl_sample(std::span<const double> logits, int count,
                                              std::mt19937_64& rng) {
  const int n = static_cast<int>(logits.size());
  if (count > n) throw std::invalid_argument("insufficient candidates");
  std::vector<int> remaining(n);
  std::iota(remaining.begin(), remaining.end(), 0);
  std::vector<int> chosen;
  chosen.reserve(count);
  double log_prob = 0.0;
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  for (int step = 0; step < count; ++step) {
    double zmax = -std::numeric_limits<double>::infinity();
    for (int idx : remaining) zmax = std::max(zmax, logits[idx]);
    double total = 0.0;
    std::vector<double> w(remaining.size());
    for (size_t r = 0; r < remaining.size(); ++r) {
      w[r] = std::exp(logits[remaining[r]] - zmax);
      total += w[r];
    }
    const double u = unif(rng) * total;
    double acc = 0.0;
    size_t pick = remaining.size() - 1;
    for (size_t r = 0; r < remaining.size(); ++r) {
      acc += w[r];
      if (u < acc) {
        pick = r;
        break;
      }
    }
    log_prob += logits[remaining[pick]] - zmax - std::log(total);
    chosen.push_back(remaining[pick]);
    remaining.erase(remaining.begin() + pick);
  }
  return {std::move(chosen), log_prob};
}

double pl_log_prob(std::span<const double> logits, std::span<const int> order) {
  const int n = static_cast<int>(logits.size());
  std::vector<bool> used(n, false);
  double log_prob = 0.0;
  for (int idx : order) {
    if (idx < 0 || idx >= n || used[idx]) throw std::invalid_argument("pl_log_prob: bad order");
    double zmax = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i)
      if (!used[i]) zmax = std::max(zmax, logits[i]);
    double total = 0.0;
    for (int i = 0; i < n; ++i)
      if (!used[i]) total += std::exp(logits[i] - zmax);
    log_prob += logits[idx] - zmax - std::log(total);
    used[idx] = true;
  }
  return log_prob;
}

std::vector<double> pl_log_prob_grad(std::span<const double> logits, std::span<const int> order) {
  const int n = static_cast<int>(logits.size());
  std::vector<bool> used(n, false);
  std::vector<double> grad(n, 0.0);
  for (int idx : order) {
    double zmax = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i)
      if (!used[i]) zmax = std::max(zmax, logits[i]);
    double total = 0.0;
    for (int i = 0; i < n; ++i)
      if (!used[i]) total += std::exp(logits[i] - zmax);
    for (int i = 0; i < n; ++i)
      if (!used[i]) grad[i] -= std::exp(logits[i] - zmax) / total;
    grad[idx] += 1.0;
    used[idx] = true;
  }
  return grad;
}

ActionSubset select_action(const SacNetworks& nets, const AgentState& state, int subset_size,
                           SelectMode mode, const SacConfig& cfg, std::mt19937_64& rng) {
  const int n = nets.coverage_size();
  if (subset_size > n) throw std::invalid_argument("insufficient candidates");
  const std::vector<double> features = encode_state(state, cfg.latency_max);
  const std::vector<double> logits = mlp_forward(nets.policy, features);

  ActionSubset action;
  if (mode == SelectMode::kExplore) {
    auto [order, log_prob] = pl_sample(logits, subset_size, rng);
    action.log_prob = log_prob;
    for (int idx : order) action.client_ids.push_back(nets.coverage_ids[idx]);
  } else {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
      if (logits[a] != logits[b]) return logits[a] > logits[b];
      return nets.coverage_ids[a] < nets.coverage_ids[b];
    });
    idx.resize(subset_size);
    action.log_prob = pl_log_prob(logits, idx);
    for (int i : idx) action.client_ids.push_back(nets.coverage_ids[i]);
  }
  return action;
}

double fairness_metric(std::span<const long> participation_counts, double epsilon) {
  if (participation_counts.empty())
    throw std::invalid_argument("fairness_metric: empty counts");
  const double n = static_cast<double>(participation_counts.size());
  double mean = 0.0;
  for (long c : participation_counts) {
    if (c < 0) throw std::invalid_argument("fairness_metric: negative count");
    mean += static_cast<double>(c);
  }
  mean /= n;
  double var = 0.0;
  for (long c : participation_counts) {
    const double d = static_cast<double>(c) - mean;
    var += d * d;
  }
  var /= n;
  const double sd = std::sqrt(var);
  return std::tanh(mean / (sd + epsilon));
}

double compute_reward(double round_latency, double conflict_penalty, double fairness,
                      double alpha) {
  return -round_latency - conflict_penalty + alpha * fairness;
}

std::vector<double> critic_input(const SacNetworks& nets, const AgentState& s,
                                 std::span<const int> client_ids, double latency_max) {
  const int n = nets.coverage_size();
  std::vector<double> in = encode_state(s, latency_max);
  std::vector<double> mask(n, 0.0);
  for (int cid : client_ids) {
    auto it = std::lower_bound(nets.coverage_ids.begin(), nets.coverage_ids.end(), cid);
    if (it == nets.coverage_ids.end() || *it != cid)
      throw std::invalid_argument("critic_input: client outside coverage");
    mask[it - nets.coverage_ids.begin()] = 1.0;
  }
  in.insert(in.end(), mask.begin(), mask.end());
  return in;
}

double critic_loss_and_grads(const Mlp& critic, const std::vector<std::vector<double>>& inputs,
                             std::span<const double> targets, GradientSet* grads) {
  if (inputs.size() != targets.size())
    throw std::invalid_argument("critic_loss_and_grads: size mismatch");
  const double inv_n = 1.0 / static_cast<double>(inputs.size());
  double loss = 0.0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    const double q = mlp_forward(critic, inputs[i])[0];
    const double err = q - targets[i];
    loss += err * err * inv_n;
    if (grads) {
      const double out_grad[1] = {2.0 * err * inv_n};
      GradientSet g = mlp_backward(critic, inputs[i], out_grad);
      accumulate(*grads, g);
    }
  }
  return loss;
}

double actor_surrogate_and_grads(const Mlp& policy, const std::vector<std::vector<double>>& features,
                                 const std::vector<std::vector<int>>& orders,
                                 std::span<const double> coeffs, GradientSet* grads) {
  if (features.size() != orders.size() || features.size() != coeffs.size())
    throw std::invalid_argument("actor_surrogate_and_grads: size mismatch");
  const double inv_n = 1.0 / static_cast<double>(features.size());
  double loss = 0.0;
  for (size_t i = 0; i < features.size(); ++i) {
    const std::vector<double> logits = mlp_forward(policy, features[i]);
    const double lp = pl_log_prob(logits, orders[i]);
    loss += coeffs[i] * lp * inv_n;
    if (grads) {
      std::vector<double> dlogits = pl_log_prob_grad(logits, orders[i]);
      for (double& v : dlogits) v *= coeffs[i] * inv_n;
      GradientSet g = mlp_backward(policy, features[i], dlogits);
      accumulate(*grads, g);
    }
  }
  return loss;
}

double temperature_loss(double log_eta, std::span<const double> log_probs,
                        double target_entropy) {
  const double eta = std::exp(log_eta);
  double loss = 0.0;
  for (double lp : log_probs) loss += -eta * (lp + target_entropy);
  return loss / static_cast<double>(log_probs.size());
}

double update_critics(SacNetworks& nets, std::span<const Transition* const> batch,
                      const SacConfig& cfg, std::mt19937_64& rng) {
  if (batch.empty()) throw std::invalid_argument("update_critics: empty batch");
  const double eta = nets.temperature();

  std::vector<std::vector<double>> inputs;
  std::vector<double> targets;
  inputs.reserve(batch.size());
  targets.reserve(batch.size());

  for (const Transition* tr : batch) {
    double y = tr->reward * cfg.reward_scale;
    if (!tr->done) {
      const std::vector<double> next_features = encode_state(tr->next_state, cfg.latency_max);
      const std::vector<double> logits = mlp_forward(nets.policy, next_features);
      auto [order, log_prob] = pl_sample(logits, nets.subset_size, rng);
      std::vector<int> next_ids;
      next_ids.reserve(order.size());
      for (int idx : order) next_ids.push_back(nets.coverage_ids[idx]);
      const std::vector<double> next_in =
          critic_input(nets, tr->next_state, next_ids, cfg.latency_max);
      const double tq1 = mlp_forward(nets.target_q1, next_in)[0];
      const double tq2 = mlp_forward(nets.target_q2, next_in)[0];
      y += cfg.gamma * (std::min(tq1, tq2) - eta * log_prob);
    }
    inputs.push_back(critic_input(nets, tr->state, tr->action.client_ids, cfg.latency_max));
    targets.push_back(y);
  }

  GradientSet g1 = zero_gradients(nets.q1);
  GradientSet g2 = zero_gradients(nets.q2);
  const double loss1 = critic_loss_and_grads(nets.q1, inputs, targets, &g1);
  const double loss2 = critic_loss_and_grads(nets.q2, inputs, targets, &g2);
  const double loss = 0.5 * (loss1 + loss2);
  if (!std::isfinite(loss)) throw std::runtime_error("non-finite critic loss");
  adam_step(nets.q1, g1, nets.opt_q1, cfg.lr_critic, cfg.grad_clip);
  adam_step(nets.q2, g2, nets.opt_q2, cfg.lr_critic, cfg.grad_clip);
  return loss;
}

std::pair<double, double> update_actor(SacNetworks& nets,
                                       std::span<const AgentState* const> states,
                                       const SacConfig& cfg, std::mt19937_64& rng) {
  if (states.empty()) throw std::invalid_argument("update_actor: empty batch");
  const double eta = nets.temperature();

  std::vector<std::vector<double>> features;
  std::vector<std::vector<int>> orders;
  std::vector<double> coeffs;
  features.reserve(states.size());
  orders.reserve(states.size());
  coeffs.reserve(states.size());

  double loss = 0.0;
  double entropy = 0.0;
  for (const AgentState* s : states) {
    std::vector<double> f = encode_state(*s, cfg.latency_max);
    const std::vector<double> logits = mlp_forward(nets.policy, f);
    auto [order, log_prob] = pl_sample(logits, nets.subset_size, rng);
    std::vector<int> ids;
    ids.reserve(order.size());
    for (int idx : order) ids.push_back(nets.coverage_ids[idx]);
    const std::vector<double> qin = critic_input(nets, *s, ids, cfg.latency_max);
    const double q = std::min(mlp_forward(nets.q1, qin)[0], mlp_forward(nets.q2, qin)[0]);

    loss += (eta * log_prob - q) / static_cast<double>(states.size());
    entropy += -log_prob / static_cast<double>(states.size());
    // score-function coefficient for d/dphi E[eta log pi - Q]
    coeffs.push_back(eta * log_prob - q + eta);
    features.push_back(std::move(f));
    orders.push_back(std::move(order));
  }
  if (!std::isfinite(loss)) throw std::runtime_error("non-finite actor loss");

  GradientSet g = zero_gradients(nets.policy);
  actor_surrogate_and_grads(nets.policy, features, orders, coeffs, &g);
  adam_step(nets.policy, g, nets.opt_policy, cfg.lr_actor, cfg.grad_clip);
  return {loss, entropy};
}

double update_temperature(SacNetworks& nets, std::span<const AgentState* const> states,
                          const SacConfig& cfg, std::mt19937_64& rng) {
  if (states.empty()) throw std::invalid_argument("update_temperature: empty batch");

  std::vector<double> log_probs;
  log_probs.reserve(states.size());
  for (const AgentState* s : states) {
    const std::vector<double> f = encode_state(*s, cfg.latency_max);
    const std::vector<double> logits = mlp_forward(nets.policy, f);
    auto [order, log_prob] = pl_sample(logits, nets.subset_size, rng);
    (void)order;
    log_probs.push_back(log_prob);
  }
  const double loss = temperature_loss(nets.log_temperature, log_probs, nets.target_entropy);
  if (!std::isfinite(loss)) throw std::runtime_error("non-finite temperature loss");

  // dL/dlog_eta = -eta * mean(log_prob + H)
  double mean_term = 0.0;
  for (double lp : log_probs) mean_term += lp + nets.target_entropy;
  mean_term /= static_cast<double>(log_probs.size());
  const double grad = -nets.temperature() * mean_term;

  nets.temp_step += 1;
  nets.temp_m = 0.9 * nets.temp_m + 0.1 * grad;
  nets.temp_v = 0.999 * nets.temp_v + 0.001 * grad * grad;
  const double mhat = nets.temp_m / (1.0 - std::pow(0.9, static_cast<double>(nets.temp_step)));
  const double vhat = nets.temp_v / (1.0 - std::pow(0.999, static_cast<double>(nets.temp_step)));
  nets.log_temperature -= cfg.lr_temp * mhat / (std::sqrt(vhat) + 1e-8);
  return loss;
}

void polyak_targets(SacNetworks& nets, double tau) {
  polyak_update(nets.target_q1, nets.q1, tau);
  polyak_update(nets.target_q2, nets.q2, tau);
}

nlohmann::json sac_to_json(const SacNetworks& nets) {
  nlohmann::json j;
  j["coverage_ids"] = nets.coverage_ids;
  j["subset_size"] = nets.subset_size;
  j["policy"] = mlp_to_json(nets.policy);
  j["q1"] = mlp_to_json(nets.q1);
  j["q2"] = mlp_to_json(nets.q2);
  j["target_q1"] = mlp_to_json(nets.target_q1);
  j["target_q2"] = mlp_to_json(nets.target_q2);
  j["opt_policy"] = adam_to_json(nets.opt_policy);
  j["opt_q1"] = adam_to_json(nets.opt_q1);
  j["opt_q2"] = adam_to_json(nets.opt_q2);
  j["log_temperature"] = nets.log_temperature;
  j["temp_m"] = nets.temp_m;
  j["temp_v"] = nets.temp_v;
  j["temp_step"] = nets.temp_step;
  j["target_entropy"] = nets.target_entropy;
  return j;
}

SacNetworks sac_from_json(const nlohmann::json& j) {
  SacNetworks nets;
  nets.coverage_ids = j.at("coverage_ids").get<std::vector<int>>();
  nets.subset_size = j.at("subset_size").get<int>();
  nets.policy = mlp_from_json(j.at("policy"));
  nets.q1 = mlp_from_json(j.at("q1"));
  nets.q2 = mlp_from_json(j.at("q2"));
  nets.target_q1 = mlp_from_json(j.at("target_q1"));
  nets.target_q2 = mlp_from_json(j.at("target_q2"));
  nets.opt_policy = adam_from_json(j.at("opt_policy"), nets.policy);
  nets.opt_q1 = adam_from_json(j.at("opt_q1"), nets.q1);
  nets.opt_q2 = adam_from_json(j.at("opt_q2"), nets.q2);
  nets.log_temperature = j.at("log_temperature").get<double>();
  nets.temp_m = j.at("temp_m").get<double>();
  nets.temp_v = j.at("temp_v").get<double>();
  nets.temp_step = j.at("temp_step").get<long>();
  nets.target_entropy = j.at("target_entropy").get<double>();
  return nets;
}

}  // namespace fedsel
