#include "fedsel/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace fedsel {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// stream tags for derived seeds
constexpr uint64_t kTagData = 0xDA7A;
constexpr uint64_t kTagPartition = 0x504152;
constexpr uint64_t kTagModel = 0x4D4F44;
constexpr uint64_t kTagAgent = 0xA6E7;
constexpr uint64_t kTagHmmPrior = 0x484D4D;
constexpr uint64_t kTagAction = 0xAC7;
constexpr uint64_t kTagUpdate = 0x5AC;
constexpr uint64_t kTagTrain = 0x7247;

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream ss;
  ss << rng;
  return ss.str();
}

std::mt19937_64 rng_from_string(const std::string& s) {
  std::mt19937_64 rng;
  std::istringstream ss(s);
  ss >> rng;
  if (!ss) throw std::runtime_error("corrupt RNG state in checkpoint");
  return rng;
}

nlohmann::json agent_state_to_json(const AgentState& s) {
  return {{"lat", s.latencies}, {"cp", s.conflict_probs}};
}

AgentState agent_state_from_json(const nlohmann::json& j) {
  AgentState s;
  s.latencies = j.at("lat").get<std::vector<double>>();
  s.conflict_probs = j.at("cp").get<std::vector<double>>();
  return s;
}

nlohmann::json action_to_json(const ActionSubset& a) {
  return {{"ids", a.client_ids}, {"lp", a.log_prob}};
}

ActionSubset action_from_json(const nlohmann::json& j) {
  ActionSubset a;
  a.client_ids = j.at("ids").get<std::vector<int>>();
  a.log_prob = j.at("lp").get<double>();
  return a;
}

}  // namespace

Experiment::Experiment(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
  validate_config(cfg_);
  kind_ = cfg_.policy_kind();
  metrics_.config_hash = config_hash(cfg_);
  metrics_.comparable_hash = comparable_hash(cfg_);
  metrics_.policy = cfg_.policy;
  build_world();
  start_task(0);
}

void Experiment::build_world() {
  topo_ = make_topology(cfg_.topology_spec(), cfg_.channel_model(), cfg_.placement_seed);
  const int m_count = cfg_.num_servers;

  agents_.clear();
  replay_.clear();
  action_rng_.clear();
  update_rng_.clear();
  const SacConfig sc = cfg_.sac_config();
  for (int m = 0; m < m_count; ++m) {
    auto rng = make_engine(cfg_.master_seed, {static_cast<uint64_t>(m), kTagAgent});
    agents_.push_back(make_sac_networks(topo_.coverage[m], cfg_.select_count, sc, rng));
    replay_.emplace_back(sc.replay_capacity);
    action_rng_.push_back(make_engine(cfg_.master_seed, {static_cast<uint64_t>(m), kTagAction}));
    update_rng_.push_back(make_engine(cfg_.master_seed, {static_cast<uint64_t>(m), kTagUpdate}));
  }

  // all (server, client) pairs start from one shared seeded prior
  auto prior_rng = make_engine(cfg_.master_seed, {kTagHmmPrior});
  const HmmParams prior = random_params(cfg_.hmm_states, 2, prior_rng);
  hmm_.assign(m_count, {});
  history_.assign(m_count, {});
  participation_.assign(m_count, {});
  for (int m = 0; m < m_count; ++m) {
    const auto& cov = topo_.coverage[m];
    hmm_[m].assign(cov.size(), prior);
    history_[m].resize(cov.size());
    for (size_t i = 0; i < cov.size(); ++i) {
      history_[m][i].client_id = cov[i];
      history_[m][i].last_observed_round = 0;
      history_[m][i].current_round = 0;
    }
    participation_[m].assign(cov.size(), 0);
  }

  pending_.assign(m_count, std::nullopt);
  last_accuracy_.assign(m_count, kNaN);
  last_critic_loss_.assign(m_count, kNaN);
  last_actor_loss_.assign(m_count, kNaN);
  last_temp_loss_.assign(m_count, kNaN);
  last_entropy_.assign(m_count, kNaN);
}

void Experiment::start_task(int task) {
  task_ = task;
  round_ = 0;

  const uint64_t data_seed = seed_stream(cfg_.master_seed, {static_cast<uint64_t>(task), kTagData});
  Dataset all = make_blobs(cfg_.synth_classes, cfg_.synth_dim,
                           cfg_.synth_samples + cfg_.synth_test_samples, cfg_.synth_spread,
                           data_seed);
  // head = train, tail = test; labels cycle so both stay balanced
  train_data_.num_classes = all.num_classes;
  train_data_.features = Mat(cfg_.synth_samples, all.dim());
  train_data_.labels.assign(all.labels.begin(), all.labels.begin() + cfg_.synth_samples);
  std::copy(all.features.a.begin(),
            all.features.a.begin() + static_cast<size_t>(cfg_.synth_samples) * all.dim(),
            train_data_.features.a.begin());
  test_data_.num_classes = all.num_classes;
  test_data_.features = Mat(cfg_.synth_test_samples, all.dim());
  test_data_.labels.assign(all.labels.begin() + cfg_.synth_samples, all.labels.end());
  std::copy(all.features.a.begin() + static_cast<size_t>(cfg_.synth_samples) * all.dim(),
            all.features.a.end(), test_data_.features.a.begin());

  const PartitionScheme scheme =
      cfg_.partition == "iid" ? PartitionScheme::kIid : PartitionScheme::kDirichlet;
  client_data_ = partition_data(
      train_data_, cfg_.num_clients, scheme, cfg_.dirichlet_eta,
      seed_stream(cfg_.master_seed, {static_cast<uint64_t>(task), kTagPartition}));

  compute_time_.assign(cfg_.num_clients, 0.0);
  for (int k = 0; k < cfg_.num_clients; ++k) {
    topo_.clients[k].num_samples = client_data_[k].size();
    compute_time_[k] =
        static_cast<double>(client_data_[k].size()) * cfg_.local_epochs /
        topo_.clients[k].compute_rate;
  }

  models_.clear();
  const std::vector<int> layers = cfg_.task_model_layers();
  for (int m = 0; m < cfg_.num_servers; ++m) {
    auto rng = make_engine(cfg_.master_seed,
                           {static_cast<uint64_t>(task), static_cast<uint64_t>(m), kTagModel});
    models_.push_back(make_mlp(layers, rng));
  }

  if (task > 0 && cfg_.reset_participation_per_task)
    for (auto& p : participation_) std::fill(p.begin(), p.end(), 0);

  for (auto& acc : last_accuracy_) acc = kNaN;
}

RoundOutcome Experiment::step() {
  const long t = round_ + 1;
  const int m_count = cfg_.num_servers;
  const ChannelModel channel = cfg_.channel_model();
  const SacConfig sc = cfg_.sac_config();
  const bool uses_sac = kind_ != PolicyKind::kRandomFedavg;
  const bool uses_hmm = kind_ == PolicyKind::kRlCrp || kind_ == PolicyKind::kRlCrpNoFairness;
  const double alpha_eff = kind_ == PolicyKind::kRlCrpNoFairness ? 0.0 : cfg_.alpha_fairness;

  RoundOutcome outcome;
  outcome.round = t;
  outcome.servers.resize(m_count);

  // --- observe: per-server SNR, latency estimate, conflict probabilities ---
  std::vector<std::vector<double>> snr(m_count);
  std::vector<AgentState> states(m_count);
  std::vector<int> low_confidence(m_count, 0);
  const double nominal_share = cfg_.total_bandwidth_hz / cfg_.select_count;

  for (int m = 0; m < m_count; ++m) {
    const auto& cov = topo_.coverage[m];
    snr[m].resize(cov.size());
    states[m].latencies.resize(cov.size());
    states[m].conflict_probs.assign(cov.size(), 0.0);
    for (size_t i = 0; i < cov.size(); ++i) {
      const ClientProfile& c = topo_.clients[cov[i]];
      snr[m][i] = channel_quality(c, topo_.servers[m], t, channel);
      const double est = upload_latency(nominal_share, snr[m][i], compute_time_[cov[i]],
                                        cfg_.model_size_bits);
      states[m].latencies[i] = std::min(est, cfg_.latency_max_s);
      if (uses_hmm) {
        SelectionHistory& h = history_[m][i];
        h.current_round = t;
        if (h.observations.empty()) {
          states[m].conflict_probs[i] = prior_conflict(hmm_[m][i], t);
          ++low_confidence[m];
        } else {
          states[m].conflict_probs[i] = predict_conflict(hmm_[m][i], h);
          if (h.observations.size() < 3) ++low_confidence[m];
        }
      }
    }
  }

  // --- complete last round's transitions now that s' is known ---
  if (uses_sac) {
    for (int m = 0; m < m_count; ++m) {
      if (pending_[m]) {
        replay_[m].push({pending_[m]->state, pending_[m]->action, pending_[m]->reward,
                         states[m], false});
        pending_[m].reset();
      }
    }
  }

  // --- select and allocate ---
  const bool warmup = uses_sac && t <= cfg_.sac_warmup_rounds;
  for (int m = 0; m < m_count; ++m) {
    const auto& cov = topo_.coverage[m];
    ActionSubset action;
    if (kind_ == PolicyKind::kRandomFedavg || warmup) {
      const std::vector<double> zero_logits(cov.size(), 0.0);
      auto [order, log_prob] = pl_sample(zero_logits, cfg_.select_count, action_rng_[m]);
      action.log_prob = log_prob;
      for (int idx : order) action.client_ids.push_back(cov[idx]);
    } else {
      action = select_action(agents_[m], states[m], cfg_.select_count, SelectMode::kExplore, sc,
                             action_rng_[m]);
    }

    ServerRound& sr = outcome.servers[m];
    sr.selected = action.client_ids;

    std::vector<BandwidthRequest> requests;
    requests.reserve(sr.selected.size());
    for (int cid : sr.selected) {
      const auto it = std::lower_bound(cov.begin(), cov.end(), cid);
      requests.push_back({cid, snr[m][it - cov.begin()], compute_time_[cid]});
    }
    const Allocation alloc = waterfill_allocate(
        requests, cfg_.total_bandwidth_hz, cfg_.waterfill_min_unit_hz, cfg_.model_size_bits,
        cfg_.latency_max_s * cfg_.waterfill_headroom);
    sr.allocation_hz = alloc.hz;
    pending_[m] = Pending{states[m], action, 0.0};
  }

  // --- resolve conflicts across servers ---
  std::vector<std::vector<int>> selected_sets(m_count);
  for (int m = 0; m < m_count; ++m) selected_sets[m] = outcome.servers[m].selected;
  const ConflictMode mode = cfg_.conflict_mode == "all_fail" ? ConflictMode::kAllFail
                                                             : ConflictMode::kWinnerBySnr;
  ConflictResolution resolution = resolve_conflicts(selected_sets, snr, topo_.coverage, mode);
  outcome.conflicts = resolution.events;

  // --- uploads, timeouts, training, rewards ---
  for (int m = 0; m < m_count; ++m) {
    const auto& cov = topo_.coverage[m];
    ServerRound& sr = outcome.servers[m];
    sr.effective = resolution.effective[m];
    for (const ConflictEvent& e : resolution.events)
      if (e.losing_server == m) ++sr.conflict_count;

    sr.latency_s.assign(sr.selected.size(), std::numeric_limits<double>::infinity());
    std::vector<double> effective_latencies;
    for (size_t i = 0; i < sr.selected.size(); ++i) {
      const int cid = sr.selected[i];
      if (!std::binary_search(sr.effective.begin(), sr.effective.end(), cid)) continue;
      const auto it = std::lower_bound(cov.begin(), cov.end(), cid);
      const double lat = upload_latency(sr.allocation_hz[i], snr[m][it - cov.begin()],
                                        compute_time_[cid], cfg_.model_size_bits);
      sr.latency_s[i] = lat;
      effective_latencies.push_back(lat);
      if (lat > cfg_.latency_max_s) {
        sr.timeout_clients.push_back(cid);
      } else {
        sr.aggregated.push_back(cid);
      }
    }
    std::sort(sr.aggregated.begin(), sr.aggregated.end());
    std::sort(sr.timeout_clients.begin(), sr.timeout_clients.end());
    sr.round_latency_s = round_latency(effective_latencies, cfg_.latency_max_s);

    if (!sr.aggregated.empty()) {
      std::vector<Mlp> trained;
      std::vector<int> counts;
      for (int cid : sr.aggregated) {
        const uint64_t seed =
            seed_stream(cfg_.master_seed,
                        {kTagTrain, static_cast<uint64_t>(task_), static_cast<uint64_t>(t),
                         static_cast<uint64_t>(m), static_cast<uint64_t>(cid)});
        trained.push_back(local_train(models_[m], client_data_[cid], cfg_.train_config(), seed));
        counts.push_back(client_data_[cid].size());
      }
      models_[m] = aggregate(trained, counts);
      for (int cid : sr.aggregated) {
        const auto it = std::lower_bound(cov.begin(), cov.end(), cid);
        ++participation_[m][it - cov.begin()];
      }
    }

    sr.fairness = fairness_metric(participation_[m], 1e-8);
    sr.conflict_cost =
        cfg_.conflict_penalty_beta * (sr.conflict_count + static_cast<int>(sr.timeout_clients.size()));
    sr.reward = compute_reward(sr.round_latency_s, sr.conflict_cost, sr.fairness, alpha_eff);
    if (pending_[m]) pending_[m]->reward = sr.reward;
  }

  // --- SAC updates ---
  if (uses_sac && t > cfg_.sac_warmup_rounds) {
    for (int m = 0; m < m_count; ++m) {
      if (replay_[m].size() < sc.batch_size) continue;
      for (int u = 0; u < cfg_.sac_updates_per_round; ++u) {
        const auto batch = replay_[m].sample(sc.batch_size, update_rng_[m]);
        last_critic_loss_[m] = update_critics(agents_[m], batch, sc, update_rng_[m]);
        std::vector<const AgentState*> batch_states;
        batch_states.reserve(batch.size());
        for (const Transition* tr : batch) batch_states.push_back(&tr->state);
        const auto [actor_loss, entropy] = update_actor(agents_[m], batch_states, sc, update_rng_[m]);
        last_actor_loss_[m] = actor_loss;
        last_entropy_[m] = entropy;
        last_temp_loss_[m] = update_temperature(agents_[m], batch_states, sc, update_rng_[m]);
        polyak_targets(agents_[m], sc.tau);
      }
    }
  }

  // --- HMM bookkeeping and re-estimation ---
  const auto observations = observe(outcome);
  for (int m = 0; m < m_count; ++m) {
    const auto& cov = topo_.coverage[m];
    for (const auto& [cid, o] : observations[m]) {
      const auto it = std::lower_bound(cov.begin(), cov.end(), cid);
      SelectionHistory& h = history_[m][it - cov.begin()];
      h.observations.push_back(o);
      h.last_observed_round = t;
      h.current_round = t;
      if (uses_hmm && cfg_.hmm_update_every > 0 && t % cfg_.hmm_update_every == 0 &&
          h.observations.size() >= 2) {
        const size_t i = it - cov.begin();
        const HmmParams batch = baum_welch_step(hmm_[m][i], h.observations, cfg_.hmm_smoothing);
        hmm_[m][i] = incremental_update(hmm_[m][i], batch, cfg_.hmm_rho);
      }
    }
  }

  round_ = t;

  // --- evaluation + metrics ---
  const bool eval_now = (t % cfg_.eval_every == 0) || (t == cfg_.rounds);
  double objective = kNaN;
  if (eval_now) {
    std::vector<std::vector<const ClientDataset*>> server_clients(m_count);
    for (int m = 0; m < m_count; ++m)
      for (int cid : topo_.coverage[m]) server_clients[m].push_back(&client_data_[cid]);
    objective = global_objective(models_, server_clients);
    for (int m = 0; m < m_count; ++m)
      last_accuracy_[m] = evaluate(models_[m], test_data_).accuracy;
  }

  for (int m = 0; m < m_count; ++m) {
    const ServerRound& sr = outcome.servers[m];
    RoundRecord r;
    r.task = task_;
    r.round = t;
    r.server = m;
    r.reward = sr.reward;
    r.latency = sr.round_latency_s;
    r.conflict_cost = sr.conflict_cost;
    r.fairness = sr.fairness;
    r.conflicts = sr.conflict_count;
    r.timeouts = static_cast<int>(sr.timeout_clients.size());
    r.low_confidence = low_confidence[m];
    r.test_accuracy = eval_now ? last_accuracy_[m] : kNaN;
    r.global_objective = eval_now ? objective : kNaN;
    r.critic_loss = last_critic_loss_[m];
    r.actor_loss = last_actor_loss_[m];
    r.temperature_loss = last_temp_loss_[m];
    r.entropy = last_entropy_[m];
    r.temperature = uses_sac ? agents_[m].temperature() : kNaN;
    r.participation = participation_[m];
    metrics_.rows.push_back(r);
    if (writer_.is_open()) writer_.append(metrics_.rows.back());
  }
  return outcome;
}

void Experiment::run_all(const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::string csv_path, checkpoint_path;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    csv_path = (fs::path(out_dir) / "metrics.csv").string();
    checkpoint_path = (fs::path(out_dir) / "checkpoint.json").string();
    std::ofstream cfg_out(fs::path(out_dir) / "config.cfg");
    cfg_out << config_to_text(cfg_);
    writer_.open(csv_path, metrics_.config_hash, metrics_.comparable_hash, cfg_.policy);
    for (const RoundRecord& r : metrics_.rows) writer_.append(r);
  }

  while (true) {
    while (round_ < cfg_.rounds) {
      step();
      if (!checkpoint_path.empty() && cfg_.checkpoint_every > 0 &&
          round_ % cfg_.checkpoint_every == 0)
        save_checkpoint(checkpoint_path);
    }
    if (task_ + 1 >= cfg_.num_tasks) break;
    start_task(task_ + 1);
  }

  if (!out_dir.empty()) {
    write_metrics_json(metrics_, (fs::path(out_dir) / "metrics.json").string());
    if (cfg_.checkpoint_every > 0) save_checkpoint(checkpoint_path);
  }
}

void Experiment::restore_metrics(MetricsLog log) {
  if (log.config_hash != metrics_.config_hash)
    throw std::invalid_argument("restore_metrics: metrics belong to a different config");
  metrics_ = std::move(log);
}

nlohmann::json Experiment::to_checkpoint() const {
  nlohmann::json j;
  j["config"] = config_to_text(cfg_);
  j["round"] = round_;
  j["task"] = task_;
  nlohmann::json servers = nlohmann::json::array();
  for (int m = 0; m < cfg_.num_servers; ++m) {
    nlohmann::json s;
    s["model"] = mlp_to_json(models_[m]);
    s["agent"] = sac_to_json(agents_[m]);
    s["participation"] = participation_[m];
    nlohmann::json hmms = nlohmann::json::array();
    for (const HmmParams& p : hmm_[m]) hmms.push_back(hmm_to_json(p));
    s["hmm"] = std::move(hmms);
    nlohmann::json hist = nlohmann::json::array();
    for (const SelectionHistory& h : history_[m])
      hist.push_back({{"client_id", h.client_id},
                      {"obs", h.observations},
                      {"last", h.last_observed_round},
                      {"cur", h.current_round}});
    s["history"] = std::move(hist);
    nlohmann::json buf = nlohmann::json::array();
    for (const Transition& tr : replay_[m].raw())
      buf.push_back({{"s", agent_state_to_json(tr.state)},
                     {"a", action_to_json(tr.action)},
                     {"r", tr.reward},
                     {"s2", agent_state_to_json(tr.next_state)},
                     {"done", tr.done}});
    s["replay"] = std::move(buf);
    s["replay_head"] = replay_[m].head();
    if (pending_[m]) {
      s["pending"] = {{"s", agent_state_to_json(pending_[m]->state)},
                      {"a", action_to_json(pending_[m]->action)},
                      {"r", pending_[m]->reward}};
    }
    s["action_rng"] = rng_to_string(action_rng_[m]);
    s["update_rng"] = rng_to_string(update_rng_[m]);
    s["last_accuracy"] = last_accuracy_[m];
    s["last_critic_loss"] = last_critic_loss_[m];
    s["last_actor_loss"] = last_actor_loss_[m];
    s["last_temp_loss"] = last_temp_loss_[m];
    s["last_entropy"] = last_entropy_[m];
    servers.push_back(std::move(s));
  }
  j["servers"] = std::move(servers);
  return j;
}

Experiment Experiment::from_checkpoint(const nlohmann::json& j) {
  Experiment e;
  e.cfg_ = parse_config_text(j.at("config").get<std::string>());
  e.kind_ = e.cfg_.policy_kind();
  e.metrics_.config_hash = config_hash(e.cfg_);
  e.metrics_.comparable_hash = comparable_hash(e.cfg_);
  e.metrics_.policy = e.cfg_.policy;
  e.build_world();
  e.start_task(j.at("task").get<int>());
  e.round_ = j.at("round").get<long>();

  const auto& servers = j.at("servers");
  for (int m = 0; m < e.cfg_.num_servers; ++m) {
    const auto& s = servers.at(m);
    e.models_[m] = mlp_from_json(s.at("model"));
    e.agents_[m] = sac_from_json(s.at("agent"));
    e.participation_[m] = s.at("participation").get<std::vector<long>>();
    for (size_t i = 0; i < e.hmm_[m].size(); ++i) e.hmm_[m][i] = hmm_from_json(s.at("hmm").at(i));
    for (size_t i = 0; i < e.history_[m].size(); ++i) {
      const auto& h = s.at("history").at(i);
      e.history_[m][i].client_id = h.at("client_id").get<int>();
      e.history_[m][i].observations = h.at("obs").get<std::vector<int>>();
      e.history_[m][i].last_observed_round = h.at("last").get<long>();
      e.history_[m][i].current_round = h.at("cur").get<long>();
    }
    std::vector<Transition> buf;
    for (const auto& tr : s.at("replay")) {
      Transition x;
      x.state = agent_state_from_json(tr.at("s"));
      x.action = action_from_json(tr.at("a"));
      x.reward = tr.at("r").get<double>();
      x.next_state = agent_state_from_json(tr.at("s2"));
      x.done = tr.at("done").get<bool>();
      buf.push_back(std::move(x));
    }
    e.replay_[m].restore(std::move(buf), s.at("replay_head").get<size_t>());
    if (s.contains("pending")) {
      Pending p;
      p.state = agent_state_from_json(s.at("pending").at("s"));
      p.action = action_from_json(s.at("pending").at("a"));
      p.reward = s.at("pending").at("r").get<double>();
      e.pending_[m] = std::move(p);
    }
    e.action_rng_[m] = rng_from_string(s.at("action_rng").get<std::string>());
    e.update_rng_[m] = rng_from_string(s.at("update_rng").get<std::string>());
    e.last_accuracy_[m] = s.at("last_accuracy").is_null() ? kNaN : s.at("last_accuracy").get<double>();
    auto opt = [](const nlohmann::json& v) { return v.is_null() ? kNaN : v.get<double>(); };
    e.last_critic_loss_[m] = opt(s.at("last_critic_loss"));
    e.last_actor_loss_[m] = opt(s.at("last_actor_loss"));
    e.last_temp_loss_[m] = opt(s.at("last_temp_loss"));
    e.last_entropy_[m] = opt(s.at("last_entropy"));
  }
  return e;
}

void Experiment::save_checkpoint(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << to_checkpoint().dump() << "\n";
}

Experiment Experiment::load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  nlohmann::json j;
  in >> j;
  return from_checkpoint(j);
}

MetricsLog run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
  Experiment e(cfg);
  e.run_all(out_dir);
  return e.metrics();
}

std::vector<PolicySummary> compare_policies(const std::vector<MetricsLog>& logs, long window) {
  if (logs.empty()) throw std::invalid_argument("compare_policies: no logs");
  for (const MetricsLog& log : logs)
    if (log.comparable_hash != logs[0].comparable_hash)
      throw std::invalid_argument("compare_policies: mismatched topologies");

  std::vector<PolicySummary> out;
  for (const MetricsLog& log : logs) {
    PolicySummary s;
    s.policy = log.policy;
    long max_round = 0;
    for (const RoundRecord& r : log.rows) max_round = std::max(max_round, r.round);
    const long from = std::max<long>(1, max_round - window + 1);

    double reward_sum = 0.0;
    long reward_n = 0;
    double conflict_sum = 0.0;
    std::set<long> rounds_seen;
    for (const RoundRecord& r : log.rows) {
      conflict_sum += r.conflicts;
      rounds_seen.insert(r.round);
      if (r.round >= from) {
        reward_sum += r.reward;
        ++reward_n;
      }
    }
    s.mean_reward_final_window = reward_n > 0 ? reward_sum / reward_n : 0.0;
    s.mean_conflicts_per_round =
        rounds_seen.empty() ? 0.0 : conflict_sum / static_cast<double>(rounds_seen.size());

    double acc_sum = 0.0;
    int acc_n = 0;
    std::vector<long> final_participation;
    for (const RoundRecord& r : log.rows) {
      if (r.round != max_round) continue;
      if (!std::isnan(r.test_accuracy)) {
        acc_sum += r.test_accuracy;
        ++acc_n;
      }
      final_participation.insert(final_participation.end(), r.participation.begin(),
                                 r.participation.end());
    }
    // fall back to the last evaluated round when the run ended off-cadence
    if (acc_n == 0) {
      long best = -1;
      for (const RoundRecord& r : log.rows)
        if (!std::isnan(r.test_accuracy)) best = std::max(best, r.round);
      for (const RoundRecord& r : log.rows)
        if (r.round == best && !std::isnan(r.test_accuracy)) {
          acc_sum += r.test_accuracy;
          ++acc_n;
        }
    }
    s.final_accuracy = acc_n > 0 ? acc_sum / acc_n : kNaN;

    if (!final_participation.empty()) {
      double mean = 0.0;
      for (long c : final_participation) mean += static_cast<double>(c);
      mean /= final_participation.size();
      double var = 0.0;
      for (long c : final_participation) {
        const double d = c - mean;
        var += d * d;
      }
      var /= final_participation.size();
      s.participation_cv = mean > 0.0 ? std::sqrt(var) / mean : 0.0;
    }
    out.push_back(s);
  }
  return out;
}

std::string summaries_to_csv(const std::vector<PolicySummary>& summaries) {
  std::string out = "policy,mean_reward_final_window,mean_conflicts_per_round,final_accuracy,"
                    "participation_cv\n";
  for (const PolicySummary& s : summaries) {
    out += s.policy + "," + format_g17(s.mean_reward_final_window) + "," +
           format_g17(s.mean_conflicts_per_round) + "," + format_g17(s.final_accuracy) + "," +
           format_g17(s.participation_cv) + "\n";
  }
  return out;
}

std::vector<double> per_round_mean(const MetricsLog& log, const std::string& column) {
  std::map<long, std::pair<double, int>> acc;
  for (const RoundRecord& r : log.rows) {
    double v;
    if (column == "reward") v = r.reward;
    else if (column == "conflicts") v = r.conflicts;
    else if (column == "latency") v = r.latency;
    else if (column == "fairness") v = r.fairness;
    else if (column == "accuracy") v = r.test_accuracy;
    else if (column == "entropy") v = r.entropy;
    else throw std::invalid_argument("per_round_mean: unknown column " + column);
    if (std::isnan(v)) continue;
    auto& slot = acc[r.round];
    slot.first += v;
    slot.second += 1;
  }
  std::vector<double> out;
  out.reserve(acc.size());
  for (const auto& [round, slot] : acc) out.push_back(slot.first / slot.second);
  return out;
}

}  // namespace fedsel
