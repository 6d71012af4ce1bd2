#include "fedsel/env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace fedsel {

double distance_km(const ClientProfile& c, const ServerProfile& s) {
  const double dx = c.x - s.x, dy = c.y - s.y;
  return std::sqrt(dx * dx + dy * dy);
}

double pathloss_gain(double d_km, const ChannelModel& model) {
  const double d = std::max(d_km, model.min_distance_km);
  return std::pow(d, -model.pathloss_exponent);
}

double channel_quality(const ClientProfile& client, const ServerProfile& server, long round,
                       const ChannelModel& model) {
  const double d = distance_km(client, server);
  if (d > server.coverage_radius)
    throw std::invalid_argument("channel_quality: client outside coverage");
  double fading = 1.0;
  if (model.rayleigh) {
    auto rng = make_engine(client.fading_seed,
                           {static_cast<uint64_t>(server.server_id), static_cast<uint64_t>(round)});
    std::exponential_distribution<double> exp1(1.0);  // Rayleigh amplitude -> Exp(1) power
    fading = exp1(rng);
    if (fading <= 0.0) fading = std::numeric_limits<double>::min();
  }
  // pathloss is per link; channel_gain_base caches the best-link value only
  return model.tx_power * pathloss_gain(d, model) * fading / model.noise_power;
}

std::vector<std::vector<int>> coverage_sets(const std::vector<ClientProfile>& clients,
                                            const std::vector<ServerProfile>& servers) {
  std::vector<std::vector<int>> cov(servers.size());
  for (size_t m = 0; m < servers.size(); ++m) {
    for (const ClientProfile& c : clients)
      if (distance_km(c, servers[m]) <= servers[m].coverage_radius)
        cov[m].push_back(c.client_id);
    std::sort(cov[m].begin(), cov[m].end());
  }
  return cov;
}

Allocation waterfill_allocate(std::span<const BandwidthRequest> candidates, double total_bandwidth,
                              double min_unit, double model_size_bits, double latency_budget) {
  if (total_bandwidth <= 0.0)
    throw std::invalid_argument("waterfill_allocate: total bandwidth must be positive");
  const size_t n = candidates.size();
  Allocation out;
  out.hz.assign(n, 0.0);
  out.starved.assign(n, 0);

  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (candidates[a].snr != candidates[b].snr) return candidates[a].snr > candidates[b].snr;
    return candidates[a].client_id < candidates[b].client_id;
  });

  double remaining = total_bandwidth;
  bool exhausted = false;
  for (size_t pos = 0; pos < n; ++pos) {
    const size_t i = order[pos];
    if (exhausted) {
      out.starved[i] = 1;
      continue;
    }
    const BandwidthRequest& c = candidates[i];
    const double budget = latency_budget - c.compute_time;
    double demand = std::numeric_limits<double>::infinity();
    if (budget > 0.0 && c.snr > 0.0) {
      demand = model_size_bits / (budget * std::log2(1.0 + c.snr));
      if (min_unit > 0.0) demand = std::ceil(demand / min_unit) * min_unit;
    }
    if (demand <= remaining) {
      out.hz[i] = demand;
      remaining -= demand;
    } else {
      out.starved[i] = 1;
      exhausted = true;  // remaining bandwidth cannot satisfy the next client
    }
  }
  return out;
}

double upload_latency(double allocation_hz, double snr, double compute_time,
                      double model_size_bits) {
  if (allocation_hz <= 0.0) return std::numeric_limits<double>::infinity();
  return compute_time + model_size_bits / (allocation_hz * std::log2(1.0 + snr));
}

double round_latency(std::span<const double> latencies, double latency_max) {
  if (latencies.empty()) return latency_max;
  double worst = 0.0;
  for (double l : latencies) worst = std::max(worst, std::min(l, latency_max));
  return std::min(worst, latency_max);
}

ConflictResolution resolve_conflicts(const std::vector<std::vector<int>>& selected,
                                     const std::vector<std::vector<double>>& snr_by_server,
                                     const std::vector<std::vector<int>>& coverage,
                                     ConflictMode mode) {
  const size_t num_servers = selected.size();
  ConflictResolution res;
  res.effective.resize(num_servers);

  std::map<int, std::vector<int>> selectors;  // client -> server ids
  for (size_t m = 0; m < num_servers; ++m)
    for (int cid : selected[m]) selectors[cid].push_back(static_cast<int>(m));

  auto snr_of = [&](int m, int cid) {
    const auto& cov = coverage[m];
    auto it = std::lower_bound(cov.begin(), cov.end(), cid);
    if (it == cov.end() || *it != cid)
      throw std::invalid_argument("resolve_conflicts: selected client outside coverage");
    return snr_by_server[m][it - cov.begin()];
  };

  for (const auto& [cid, servers] : selectors) {
    if (servers.size() == 1) {
      res.effective[servers[0]].push_back(cid);
      continue;
    }
    if (mode == ConflictMode::kAllFail) {
      for (int m : servers)
        res.events.push_back({cid, m, -1});
      continue;
    }
    int winner = servers[0];
    double best = snr_of(servers[0], cid);
    for (size_t k = 1; k < servers.size(); ++k) {
      const double s = snr_of(servers[k], cid);
      if (s > best) {  // ties keep the lower server id (first seen)
        best = s;
        winner = servers[k];
      }
    }
    res.effective[winner].push_back(cid);
    for (int m : servers)
      if (m != winner) res.events.push_back({cid, m, winner});
  }
  for (auto& e : res.effective) std::sort(e.begin(), e.end());
  return res;
}

std::vector<std::vector<std::pair<int, int>>> observe(const RoundOutcome& outcome) {
  std::vector<std::vector<std::pair<int, int>>> obs(outcome.servers.size());
  for (size_t m = 0; m < outcome.servers.size(); ++m) {
    const ServerRound& sr = outcome.servers[m];
    for (int cid : sr.selected) {
      const bool kept = std::binary_search(sr.effective.begin(), sr.effective.end(), cid);
      const bool timed_out =
          std::find(sr.timeout_clients.begin(), sr.timeout_clients.end(), cid) !=
          sr.timeout_clients.end();
      obs[m].push_back({cid, (!kept || timed_out) ? 1 : 0});
    }
  }
  return obs;
}

namespace {

// Area of the coverage union on a fixed grid; exactness is irrelevant, it
// only tunes the rejection-sampling box.
double union_area(const std::vector<ServerProfile>& servers, double x0, double x1, double y0,
                  double y1) {
  const int n = 600;
  const double dx = (x1 - x0) / n, dy = (y1 - y0) / n;
  long inside = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double px = x0 + (i + 0.5) * dx;
      const double py = y0 + (j + 0.5) * dy;
      for (const ServerProfile& s : servers) {
        const double ddx = px - s.x, ddy = py - s.y;
        if (ddx * ddx + ddy * ddy <= s.coverage_radius * s.coverage_radius) {
          ++inside;
          break;
        }
      }
    }
  return static_cast<double>(inside) * dx * dy;
}

}  // namespace

Topology make_topology(const TopologySpec& spec, const ChannelModel& model, uint64_t seed) {
  if (spec.num_servers < 1 || spec.num_clients < 1)
    throw std::invalid_argument("make_topology: need at least one server and one client");
  int target = spec.covered_target;
  if (target < 0) target = static_cast<int>(std::lround(0.8 * spec.num_clients));
  if (target > spec.num_clients)
    throw std::invalid_argument("make_topology: covered_target exceeds client count");

  Topology topo;
  for (int m = 0; m < spec.num_servers; ++m) {
    ServerProfile s;
    s.server_id = m;
    s.x = m * spec.server_spacing_km;
    s.y = 0.0;
    s.coverage_radius = spec.coverage_radius_km;
    s.total_bandwidth = spec.total_bandwidth_hz;
    s.per_round_budget = spec.per_round_budget;
    topo.servers.push_back(s);
  }

  const double r = spec.coverage_radius_km;
  const double x0 = -r, x1 = (spec.num_servers - 1) * spec.server_spacing_km + r;
  const double area = union_area(topo.servers, x0, x1, -r, r);
  // Inflate the box height so a uniform draw lands in coverage with roughly
  // the requested probability; keep the box tall enough to contain the circles.
  double height = std::max(2.0 * r, area / (spec.covered_fraction_box * (x1 - x0)));
  const double y0 = -height / 2.0, y1 = height / 2.0;

  auto rng = make_engine(seed, {0x706c6163ull});  // placement stream
  std::uniform_real_distribution<double> ux(x0, x1), uy(y0, y1);

  std::vector<std::pair<double, double>> pos(spec.num_clients);
  const int max_attempts = 200000;
  bool placed = false;
  for (int attempt = 0; attempt < max_attempts && !placed; ++attempt) {
    int covered = 0;
    for (int k = 0; k < spec.num_clients; ++k) {
      pos[k] = {ux(rng), uy(rng)};
      for (const ServerProfile& s : topo.servers) {
        const double dx = pos[k].first - s.x, dy = pos[k].second - s.y;
        if (dx * dx + dy * dy <= r * r) {
          ++covered;
          break;
        }
      }
    }
    if (covered != target) continue;
    // every server must cover at least its per-round budget
    bool ok = true;
    for (const ServerProfile& s : topo.servers) {
      int c = 0;
      for (auto& p : pos) {
        const double dx = p.first - s.x, dy = p.second - s.y;
        if (dx * dx + dy * dy <= r * r) ++c;
      }
      if (c < std::max(1, s.per_round_budget)) {
        ok = false;
        break;
      }
    }
    placed = ok;
  }
  if (!placed) throw std::runtime_error("make_topology: placement rejection did not converge");

  auto attr_rng = make_engine(seed, {0x61747472ull});  // client attribute stream
  std::uniform_real_distribution<double> rate(spec.compute_rate_min, spec.compute_rate_max);
  for (int k = 0; k < spec.num_clients; ++k) {
    ClientProfile c;
    c.client_id = k;
    c.x = pos[k].first;
    c.y = pos[k].second;
    c.compute_rate = rate(attr_rng);
    c.num_samples = 1;
    double best_d = std::numeric_limits<double>::infinity();
    for (const ServerProfile& s : topo.servers) {
      const double dx = c.x - s.x, dy = c.y - s.y;
      best_d = std::min(best_d, std::sqrt(dx * dx + dy * dy));
    }
    c.channel_gain_base = pathloss_gain(best_d, model);
    c.fading_seed = seed_stream(seed, {0xfadeull, static_cast<uint64_t>(k)});
    topo.clients.push_back(c);
  }
  topo.coverage = coverage_sets(topo.clients, topo.servers);
  return topo;
}

}  // namespace fedsel
