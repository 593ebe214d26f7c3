#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cammarl/env/environment.hpp"

namespace cammarl::env {

/// One line of a JSON-lines trajectory file:
/// {"t":1,"actions":[..],"rewards":[..],"done":false,"info":{..}}
struct TrajectoryRecord {
  int t = 0;
  std::vector<int> actions;
  std::vector<double> rewards;
  bool done = false;
  Info info;

  friend bool operator==(const TrajectoryRecord&, const TrajectoryRecord&) = default;
};

inline nlohmann::json to_json(const TrajectoryRecord& r) {
  return {{"t", r.t}, {"actions", r.actions}, {"rewards", r.rewards}, {"done", r.done},
          {"info", r.info}};
}

inline TrajectoryRecord trajectory_record_from_json(const nlohmann::json& j) {
  TrajectoryRecord r;
  r.t = j.at("t").get<int>();
  r.actions = j.at("actions").get<std::vector<int>>();
  r.rewards = j.at("rewards").get<std::vector<double>>();
  r.done = j.at("done").get<bool>();
  r.info = j.at("info").get<Info>();
  return r;
}

inline void write_trajectory(std::ostream& out, const std::vector<TrajectoryRecord>& records) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

inline std::vector<TrajectoryRecord> read_trajectory(std::istream& in) {
  std::vector<TrajectoryRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    records.push_back(trajectory_record_from_json(nlohmann::json::parse(line)));
  }
  return records;
}

}  // namespace cammarl::env
