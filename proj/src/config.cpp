#include "fedsel/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace fedsel {

std::string policy_name(PolicyKind k) {
  switch (k) {
    case PolicyKind::kRlCrp: return "rl_crp";
    case PolicyKind::kRlCrpNoFairness: return "rl_crp_no_fairness";
    case PolicyKind::kRandomFedavg: return "random_fedavg";
    case PolicyKind::kSacNoCrp: return "sac_no_crp";
  }
  throw std::logic_error("policy_name: unreachable");
}

PolicyKind parse_policy(const std::string& s) {
  if (s == "rl_crp") return PolicyKind::kRlCrp;
  if (s == "rl_crp_no_fairness") return PolicyKind::kRlCrpNoFairness;
  if (s == "random_fedavg") return PolicyKind::kRandomFedavg;
  if (s == "sac_no_crp") return PolicyKind::kSacNoCrp;
  throw std::invalid_argument("unknown policy: " + s);
}

TopologySpec ExperimentConfig::topology_spec() const {
  TopologySpec t;
  t.num_servers = num_servers;
  t.num_clients = num_clients;
  t.covered_target = covered_target;
  t.coverage_radius_km = coverage_radius_km;
  t.server_spacing_km = server_spacing_km;
  t.total_bandwidth_hz = total_bandwidth_hz;
  t.per_round_budget = select_count;
  t.compute_rate_min = compute_rate_min;
  t.compute_rate_max = compute_rate_max;
  return t;
}

ChannelModel ExperimentConfig::channel_model() const {
  ChannelModel m;
  m.pathloss_exponent = pathloss_exponent;
  m.tx_power = tx_power;
  m.noise_power = noise_power;
  m.min_distance_km = min_distance_km;
  m.rayleigh = (fading == "rayleigh");
  return m;
}

TrainConfig ExperimentConfig::train_config() const {
  return {batch_size, local_epochs, learning_rate};
}

SacConfig ExperimentConfig::sac_config() const {
  SacConfig c;
  c.gamma = sac_gamma;
  c.tau = sac_tau;
  c.lr_critic = sac_lr_critic;
  c.lr_actor = sac_lr_actor;
  c.lr_temp = sac_lr_temp;
  c.replay_capacity = static_cast<size_t>(sac_replay_capacity);
  c.batch_size = static_cast<size_t>(sac_batch_size);
  c.hidden = sac_hidden;
  c.target_entropy_scale = sac_target_entropy_scale;
  c.reward_scale = sac_reward_scale;
  c.grad_clip = sac_grad_clip;
  c.init_temperature = sac_init_temperature;
  c.latency_max = latency_max_s;
  return c;
}

std::vector<int> ExperimentConfig::task_model_layers() const {
  std::vector<int> layers;
  layers.push_back(synth_dim);
  for (int h : model_hidden) layers.push_back(h);
  layers.push_back(synth_classes);
  return layers;
}

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

std::string int_list_to_string(const std::vector<int>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

std::map<std::string, Field> field_table() {
  std::map<std::string, Field> t;
  auto add_int = [&](const std::string& key, int ExperimentConfig::*p) {
    t[key] = {[p](ExperimentConfig& c, const std::string& v) { c.*p = std::stoi(v); },
              [p](const ExperimentConfig& c) { return std::to_string(c.*p); }};
  };
  auto add_long = [&](const std::string& key, long ExperimentConfig::*p) {
    t[key] = {[p](ExperimentConfig& c, const std::string& v) { c.*p = std::stol(v); },
              [p](const ExperimentConfig& c) { return std::to_string(c.*p); }};
  };
  auto add_u64 = [&](const std::string& key, uint64_t ExperimentConfig::*p) {
    t[key] = {[p](ExperimentConfig& c, const std::string& v) { c.*p = std::stoull(v); },
              [p](const ExperimentConfig& c) { return std::to_string(c.*p); }};
  };
  auto add_double = [&](const std::string& key, double ExperimentConfig::*p) {
    t[key] = {[p](ExperimentConfig& c, const std::string& v) { c.*p = std::stod(v); },
              [p](const ExperimentConfig& c) { return format_g17(c.*p); }};
  };
  auto add_string = [&](const std::string& key, std::string ExperimentConfig::*p) {
    t[key] = {[p](ExperimentConfig& c, const std::string& v) { c.*p = v; },
              [p](const ExperimentConfig& c) { return c.*p; }};
  };
  auto add_bool = [&](const std::string& key, bool ExperimentConfig::*p) {
    t[key] = {[p](ExperimentConfig& c, const std::string& v) {
                if (v == "true" || v == "1") c.*p = true;
                else if (v == "false" || v == "0") c.*p = false;
                else throw std::invalid_argument("bad boolean: " + v);
              },
              [p](const ExperimentConfig& c) { return c.*p ? std::string("true") : std::string("false"); }};
  };
  auto add_ints = [&](const std::string& key, std::vector<int> ExperimentConfig::*p) {
    t[key] = {[p](ExperimentConfig& c, const std::string& v) { c.*p = parse_int_list(v); },
              [p](const ExperimentConfig& c) { return int_list_to_string(c.*p); }};
  };

  add_int("num_servers", &ExperimentConfig::num_servers);
  add_int("num_clients", &ExperimentConfig::num_clients);
  add_int("covered_target", &ExperimentConfig::covered_target);
  add_double("coverage_radius_km", &ExperimentConfig::coverage_radius_km);
  add_double("server_spacing_km", &ExperimentConfig::server_spacing_km);
  add_u64("placement_seed", &ExperimentConfig::placement_seed);
  add_double("compute_rate_min", &ExperimentConfig::compute_rate_min);
  add_double("compute_rate_max", &ExperimentConfig::compute_rate_max);

  add_double("pathloss_exponent", &ExperimentConfig::pathloss_exponent);
  add_double("tx_power", &ExperimentConfig::tx_power);
  add_double("noise_power", &ExperimentConfig::noise_power);
  add_double("min_distance_km", &ExperimentConfig::min_distance_km);
  add_string("fading", &ExperimentConfig::fading);

  add_int("synth_classes", &ExperimentConfig::synth_classes);
  add_int("synth_dim", &ExperimentConfig::synth_dim);
  add_int("synth_samples", &ExperimentConfig::synth_samples);
  add_int("synth_test_samples", &ExperimentConfig::synth_test_samples);
  add_double("synth_spread", &ExperimentConfig::synth_spread);
  add_string("partition", &ExperimentConfig::partition);
  add_double("dirichlet_eta", &ExperimentConfig::dirichlet_eta);
  add_ints("model_hidden", &ExperimentConfig::model_hidden);
  add_int("batch_size", &ExperimentConfig::batch_size);
  add_int("local_epochs", &ExperimentConfig::local_epochs);
  add_double("learning_rate", &ExperimentConfig::learning_rate);
  add_double("model_size_bits", &ExperimentConfig::model_size_bits);

  add_int("select_count", &ExperimentConfig::select_count);
  add_double("total_bandwidth_hz", &ExperimentConfig::total_bandwidth_hz);
  add_double("latency_max_s", &ExperimentConfig::latency_max_s);
  add_double("alpha_fairness", &ExperimentConfig::alpha_fairness);
  add_double("conflict_penalty_beta", &ExperimentConfig::conflict_penalty_beta);
  add_string("conflict_mode", &ExperimentConfig::conflict_mode);
  add_double("waterfill_headroom", &ExperimentConfig::waterfill_headroom);
  add_double("waterfill_min_unit_hz", &ExperimentConfig::waterfill_min_unit_hz);

  add_double("sac_gamma", &ExperimentConfig::sac_gamma);
  add_double("sac_tau", &ExperimentConfig::sac_tau);
  add_double("sac_lr_critic", &ExperimentConfig::sac_lr_critic);
  add_double("sac_lr_actor", &ExperimentConfig::sac_lr_actor);
  add_double("sac_lr_temp", &ExperimentConfig::sac_lr_temp);
  add_int("sac_replay_capacity", &ExperimentConfig::sac_replay_capacity);
  add_int("sac_batch_size", &ExperimentConfig::sac_batch_size);
  add_ints("sac_hidden", &ExperimentConfig::sac_hidden);
  add_int("sac_warmup_rounds", &ExperimentConfig::sac_warmup_rounds);
  add_int("sac_updates_per_round", &ExperimentConfig::sac_updates_per_round);
  add_double("sac_target_entropy_scale", &ExperimentConfig::sac_target_entropy_scale);
  add_double("sac_reward_scale", &ExperimentConfig::sac_reward_scale);
  add_double("sac_grad_clip", &ExperimentConfig::sac_grad_clip);
  add_double("sac_init_temperature", &ExperimentConfig::sac_init_temperature);

  add_int("hmm_states", &ExperimentConfig::hmm_states);
  add_double("hmm_rho", &ExperimentConfig::hmm_rho);
  add_double("hmm_smoothing", &ExperimentConfig::hmm_smoothing);
  add_int("hmm_update_every", &ExperimentConfig::hmm_update_every);

  add_string("policy", &ExperimentConfig::policy);
  add_long("rounds", &ExperimentConfig::rounds);
  add_int("eval_every", &ExperimentConfig::eval_every);
  add_u64("master_seed", &ExperimentConfig::master_seed);
  add_int("num_tasks", &ExperimentConfig::num_tasks);
  add_bool("reset_participation_per_task", &ExperimentConfig::reset_participation_per_task);
  add_long("checkpoint_every", &ExperimentConfig::checkpoint_every);
  return t;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  const auto table = field_table();
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = table.find(key);
    if (it == table.end())
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    try {
      it->second.set(cfg, value);
    } catch (const std::exception& e) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + " (" + key + "): " + e.what());
    }
  }
  validate_config(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string config_to_text(const ExperimentConfig& cfg) {
  const auto table = field_table();  // std::map iterates in key order
  std::string out;
  for (const auto& [key, field] : table) {
    out += key;
    out += " = ";
    out += field.get(cfg);
    out += "\n";
  }
  return out;
}

std::string config_hash(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(config_to_text(cfg))));
  return buf;
}

std::string comparable_hash(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  c.policy = "";
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(config_to_text(c))));
  return buf;
}

void validate_config(const ExperimentConfig& cfg) {
  if (cfg.num_servers < 1) throw std::invalid_argument("config: num_servers must be >= 1");
  if (cfg.num_clients < 1) throw std::invalid_argument("config: num_clients must be >= 1");
  if (cfg.select_count < 1) throw std::invalid_argument("config: select_count must be >= 1");
  if (cfg.rounds < 0) throw std::invalid_argument("config: rounds must be >= 0");
  if (cfg.latency_max_s <= 0) throw std::invalid_argument("config: latency_max_s must be > 0");
  if (cfg.total_bandwidth_hz <= 0)
    throw std::invalid_argument("config: total_bandwidth_hz must be > 0");
  if (cfg.hmm_states < 1) throw std::invalid_argument("config: hmm_states must be >= 1");
  if (!(cfg.hmm_rho > 0.0 && cfg.hmm_rho <= 1.0))
    throw std::invalid_argument("config: hmm_rho outside (0,1]");
  if (cfg.fading != "rayleigh" && cfg.fading != "none")
    throw std::invalid_argument("config: fading must be rayleigh or none");
  if (cfg.partition != "dirichlet" && cfg.partition != "iid")
    throw std::invalid_argument("config: partition must be dirichlet or iid");
  if (cfg.conflict_mode != "winner_by_snr" && cfg.conflict_mode != "all_fail")
    throw std::invalid_argument("config: conflict_mode must be winner_by_snr or all_fail");
  if (cfg.eval_every < 1) throw std::invalid_argument("config: eval_every must be >= 1");
  if (cfg.num_tasks < 1) throw std::invalid_argument("config: num_tasks must be >= 1");
  parse_policy(cfg.policy);
}

}  // namespace fedsel
