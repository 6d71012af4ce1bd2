#pragma once

#include <random>
#include <span>
#include <vector>

#include "fedsel/common.hpp"

namespace fedsel {

struct ClientProfile {
  int client_id = -1;
  double x = 0.0, y = 0.0;          // km
  double compute_rate = 1.0;        // samples / second
  int num_samples = 1;              // n_k, set after partitioning
  double channel_gain_base = 1.0;   // pathloss at the client's position
  uint64_t fading_seed = 0;
};

struct ServerProfile {
  int server_id = -1;
  double x = 0.0, y = 0.0;          // km
  double coverage_radius = 1.0;     // km
  double total_bandwidth = 1e8;     // Hz
  int per_round_budget = 5;         // S
};

struct ChannelModel {
  double pathloss_exponent = 3.5;
  double tx_power = 1.0;
  double noise_power = 0.1;         // N0 * reference bandwidth
  double min_distance_km = 0.01;    // clamp below this
  bool rayleigh = true;             // per-round fading on/off
};

double distance_km(const ClientProfile& c, const ServerProfile& s);

// Pathloss gain d^-exponent with the near-field clamp.
double pathloss_gain(double d_km, const ChannelModel& model);

// SNR = tx_power * gain_base * fading / noise_power; the fading draw is a
// pure function of (client fading seed, server id, round).
double channel_quality(const ClientProfile& client, const ServerProfile& server, long round,
                       const ChannelModel& model);

// client k belongs to server m's set iff distance <= coverage_radius;
// lists sorted by client_id (the canonical AgentState order).
std::vector<std::vector<int>> coverage_sets(const std::vector<ClientProfile>& clients,
                                            const std::vector<ServerProfile>& servers);

struct BandwidthRequest {
  int client_id = -1;
  double snr = 0.0;
  double compute_time = 0.0;  // seconds of local training before upload
};

struct Allocation {
  std::vector<double> hz;        // aligned with the request order
  std::vector<uint8_t> starved;  // 1 = unserved
};

// Greedy descending-SNR pass (ties by lower client id). Each client demands
// the bandwidth that brings its total latency to the budget; allocation stops
// at the first client whose demand exceeds the remaining bandwidth, and all
// later clients are starved. min_unit > 0 rounds demands up to that grain.
Allocation waterfill_allocate(std::span<const BandwidthRequest> candidates, double total_bandwidth,
                              double min_unit, double model_size_bits, double latency_budget);

// compute_time + bits / (allocation * log2(1 + snr)); +inf when allocation is 0.
double upload_latency(double allocation_hz, double snr, double compute_time,
                      double model_size_bits);

// min(L_max, max over given latencies); latencies above L_max count as L_max.
// An empty set yields L_max (the server waits out the deadline).
double round_latency(std::span<const double> latencies, double latency_max);

struct ConflictEvent {
  int client_id = -1;
  int losing_server = -1;
  int winning_server = -1;
};

enum class ConflictMode { kWinnerBySnr, kAllFail };

// A client selected by several servers serves only the one with the best SNR
// (ties by lower server id); with kAllFail every selecting server loses it.
// Returns per-server effective sets plus the conflict events.
struct ConflictResolution {
  std::vector<std::vector<int>> effective;  // per server, sorted by client id
  std::vector<ConflictEvent> events;
};

ConflictResolution resolve_conflicts(const std::vector<std::vector<int>>& selected,
                                     const std::vector<std::vector<double>>& snr_by_server,
                                     const std::vector<std::vector<int>>& coverage,
                                     ConflictMode mode);

struct ServerRound {
  std::vector<int> selected;             // as chosen (order of selection)
  std::vector<int> effective;            // post conflict resolution, sorted
  std::vector<int> aggregated;           // effective minus timeouts, sorted
  std::vector<double> allocation_hz;     // aligned with `selected`
  std::vector<double> latency_s;         // aligned with `selected`; inf = no upload
  std::vector<int> timeout_clients;
  double round_latency_s = 0.0;          // L_m
  double conflict_cost = 0.0;            // C_m
  double fairness = 0.0;                 // f
  double reward = 0.0;
  int conflict_count = 0;                // selections lost to conflict
};

struct RoundOutcome {
  long round = 0;
  std::vector<ServerRound> servers;
  std::vector<ConflictEvent> conflicts;
};

// o_t per (server, selected client): 1 when the client was lost to conflict
// or timed out, 0 otherwise.
std::vector<std::vector<std::pair<int, int>>> observe(const RoundOutcome& outcome);

struct TopologySpec {
  int num_servers = 2;
  int num_clients = 50;
  int covered_target = 40;        // -1: round(0.8 * num_clients)
  double coverage_radius_km = 1.0;
  double server_spacing_km = 1.0;
  double total_bandwidth_hz = 1e8;
  int per_round_budget = 5;
  double compute_rate_min = 50.0;
  double compute_rate_max = 500.0;
  double covered_fraction_box = 0.8;  // box sized so one draw lands in coverage with ~this prob
};

struct Topology {
  std::vector<ServerProfile> servers;
  std::vector<ClientProfile> clients;
  std::vector<std::vector<int>> coverage;  // per server, sorted client ids
};

// Servers on a line at the given spacing; clients drawn uniformly in a box
// around them, with whole placements rejected until exactly covered_target
// clients fall inside the coverage union and every server covers at least S.
Topology make_topology(const TopologySpec& spec, const ChannelModel& model, uint64_t seed);

}  // namespace fedsel
