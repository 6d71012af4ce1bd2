#pragma once

#include <string>
#include <vector>

#include "fedsel/common.hpp"

namespace fedsel {

// One row per (round, server). Optional values are NaN (empty CSV cells):
// accuracy/objective outside evaluation rounds, SAC diagnostics before any
// update happens.
struct RoundRecord {
  int task = 0;
  long round = 0;
  int server = 0;
  double reward = 0.0;
  double latency = 0.0;
  double conflict_cost = 0.0;
  double fairness = 0.0;
  int conflicts = 0;
  int timeouts = 0;
  int low_confidence = 0;  // conflict predictions backed by < 3 observations
  double test_accuracy = 0.0;
  double global_objective = 0.0;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double temperature_loss = 0.0;
  double entropy = 0.0;
  double temperature = 0.0;
  std::vector<long> participation;  // cumulative, over the server's coverage set
};

struct MetricsLog {
  std::string config_hash;
  std::string comparable_hash;
  std::string policy;
  std::vector<RoundRecord> rows;
};

extern const char* const kMetricsCsvHeader;

std::string record_to_csv(const RoundRecord& r);
void write_metrics_csv(const MetricsLog& log, const std::string& path);
MetricsLog read_metrics_csv(const std::string& path);
void write_metrics_json(const MetricsLog& log, const std::string& path);
MetricsLog read_metrics_json(const std::string& path);

// Streams rows as they are produced so long runs keep a usable file.
class MetricsWriter {
 public:
  MetricsWriter() = default;
  void open(const std::string& path, const std::string& cfg_hash, const std::string& cmp_hash,
            const std::string& policy);
  void append(const RoundRecord& r);
  bool is_open() const { return !path_.empty(); }

 private:
  std::string path_;
};

}  // namespace fedsel
