#include "fedsel/metrics.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace fedsel {

const char* const kMetricsCsvHeader =
    "task,round,server,reward,latency,conflict_cost,fairness,conflicts,timeouts,"
    "low_confidence,test_accuracy,global_objective,critic_loss,actor_loss,"
    "temperature_loss,entropy,temperature,participation";

namespace {

std::string opt_num(double v) { return std::isnan(v) ? std::string() : format_g17(v); }

double parse_opt(const std::string& s) {
  return s.empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(s);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::string record_to_csv(const RoundRecord& r) {
  std::string out;
  out += std::to_string(r.task) + "," + std::to_string(r.round) + "," + std::to_string(r.server);
  out += "," + format_g17(r.reward) + "," + format_g17(r.latency) + "," +
         format_g17(r.conflict_cost) + "," + format_g17(r.fairness);
  out += "," + std::to_string(r.conflicts) + "," + std::to_string(r.timeouts) + "," +
         std::to_string(r.low_confidence);
  out += "," + opt_num(r.test_accuracy) + "," + opt_num(r.global_objective);
  out += "," + opt_num(r.critic_loss) + "," + opt_num(r.actor_loss) + "," +
         opt_num(r.temperature_loss) + "," + opt_num(r.entropy) + "," + opt_num(r.temperature);
  out += ",";
  for (size_t i = 0; i < r.participation.size(); ++i) {
    if (i) out += ";";
    out += std::to_string(r.participation[i]);
  }
  return out;
}

void write_metrics_csv(const MetricsLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_metrics_csv: cannot open " + path);
  out << "# config_hash=" << log.config_hash << " comparable_hash=" << log.comparable_hash
      << " policy=" << log.policy << "\n";
  out << kMetricsCsvHeader << "\n";
  for (const RoundRecord& r : log.rows) out << record_to_csv(r) << "\n";
}

MetricsLog read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_metrics_csv: cannot open " + path);
  MetricsLog log;
  std::string line;
  bool seen_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::stringstream ss(line.substr(1));
      std::string token;
      while (ss >> token) {
        const size_t eq = token.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = token.substr(0, eq), value = token.substr(eq + 1);
        if (key == "config_hash") log.config_hash = value;
        else if (key == "comparable_hash") log.comparable_hash = value;
        else if (key == "policy") log.policy = value;
      }
      continue;
    }
    if (!seen_header) {
      if (line != kMetricsCsvHeader)
        throw std::runtime_error("read_metrics_csv: unexpected header in " + path);
      seen_header = true;
      continue;
    }
    const auto cells = split(line, ',');
    if (cells.size() != 18)
      throw std::runtime_error("read_metrics_csv: bad column count in " + path);
    RoundRecord r;
    r.task = std::stoi(cells[0]);
    r.round = std::stol(cells[1]);
    r.server = std::stoi(cells[2]);
    r.reward = std::stod(cells[3]);
    r.latency = std::stod(cells[4]);
    r.conflict_cost = std::stod(cells[5]);
    r.fairness = std::stod(cells[6]);
    r.conflicts = std::stoi(cells[7]);
    r.timeouts = std::stoi(cells[8]);
    r.low_confidence = std::stoi(cells[9]);
    r.test_accuracy = parse_opt(cells[10]);
    r.global_objective = parse_opt(cells[11]);
    r.critic_loss = parse_opt(cells[12]);
    r.actor_loss = parse_opt(cells[13]);
    r.temperature_loss = parse_opt(cells[14]);
    r.entropy = parse_opt(cells[15]);
    r.temperature = parse_opt(cells[16]);
    if (!cells[17].empty())
      for (const std::string& c : split(cells[17], ';')) r.participation.push_back(std::stol(c));
    log.rows.push_back(std::move(r));
  }
  if (!seen_header) throw std::runtime_error("read_metrics_csv: missing header in " + path);
  return log;
}

namespace {

nlohmann::json opt_json(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

double opt_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j.get<double>();
}

}  // namespace

void write_metrics_json(const MetricsLog& log, const std::string& path) {
  nlohmann::json j;
  j["config_hash"] = log.config_hash;
  j["comparable_hash"] = log.comparable_hash;
  j["policy"] = log.policy;
  nlohmann::json rows = nlohmann::json::array();
  for (const RoundRecord& r : log.rows) {
    nlohmann::json o;
    o["task"] = r.task;
    o["round"] = r.round;
    o["server"] = r.server;
    o["reward"] = r.reward;
    o["latency"] = r.latency;
    o["conflict_cost"] = r.conflict_cost;
    o["fairness"] = r.fairness;
    o["conflicts"] = r.conflicts;
    o["timeouts"] = r.timeouts;
    o["low_confidence"] = r.low_confidence;
    o["test_accuracy"] = opt_json(r.test_accuracy);
    o["global_objective"] = opt_json(r.global_objective);
    o["critic_loss"] = opt_json(r.critic_loss);
    o["actor_loss"] = opt_json(r.actor_loss);
    o["temperature_loss"] = opt_json(r.temperature_loss);
    o["entropy"] = opt_json(r.entropy);
    o["temperature"] = opt_json(r.temperature);
    o["participation"] = r.participation;
    rows.push_back(std::move(o));
  }
  j["rows"] = std::move(rows);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_metrics_json: cannot open " + path);
  out << j.dump(2) << "\n";
}

MetricsLog read_metrics_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_metrics_json: cannot open " + path);
  nlohmann::json j;
  in >> j;
  MetricsLog log;
  log.config_hash = j.at("config_hash").get<std::string>();
  log.comparable_hash = j.at("comparable_hash").get<std::string>();
  log.policy = j.at("policy").get<std::string>();
  for (const auto& o : j.at("rows")) {
    RoundRecord r;
    r.task = o.at("task").get<int>();
    r.round = o.at("round").get<long>();
    r.server = o.at("server").get<int>();
    r.reward = o.at("reward").get<double>();
    r.latency = o.at("latency").get<double>();
    r.conflict_cost = o.at("conflict_cost").get<double>();
    r.fairness = o.at("fairness").get<double>();
    r.conflicts = o.at("conflicts").get<int>();
    r.timeouts = o.at("timeouts").get<int>();
    r.low_confidence = o.at("low_confidence").get<int>();
    r.test_accuracy = opt_from_json(o.at("test_accuracy"));
    r.global_objective = opt_from_json(o.at("global_objective"));
    r.critic_loss = opt_from_json(o.at("critic_loss"));
    r.actor_loss = opt_from_json(o.at("actor_loss"));
    r.temperature_loss = opt_from_json(o.at("temperature_loss"));
    r.entropy = opt_from_json(o.at("entropy"));
    r.temperature = opt_from_json(o.at("temperature"));
    r.participation = o.at("participation").get<std::vector<long>>();
    log.rows.push_back(std::move(r));
  }
  return log;
}

void MetricsWriter::open(const std::string& path, const std::string& cfg_hash,
                         const std::string& cmp_hash, const std::string& policy) {
  path_ = path;
  std::ofstream out(path_);
  if (!out) throw std::runtime_error("MetricsWriter: cannot open " + path_);
  out << "# config_hash=" << cfg_hash << " comparable_hash=" << cmp_hash << " policy=" << policy
      << "\n";
  out << kMetricsCsvHeader << "\n";
}

void MetricsWriter::append(const RoundRecord& r) {
  if (path_.empty()) return;
  std::ofstream out(path_, std::ios::app);
  if (!out) throw std::runtime_error("MetricsWriter: cannot append to " + path_);
  out << record_to_csv(r) << "\n";
}

}  // namespace fedsel
