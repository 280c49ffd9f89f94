#include "dromql/curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "dromql/parser.hpp"

namespace dromql {

int estimate_difficulty(const InstanceRecord& instance, const ResponseSampler& generate,
                        const CorrectnessJudge& judge, int n_rollouts) {
  int correct = 0;
  for (int j = 0; j < n_rollouts; ++j) {
    try {
      const std::string response = generate(instance, j);
      if (judge(instance, response)) ++correct;
    } catch (const std::exception&) {
      // failure = not correct
    }
  }
  return n_rollouts - correct;
}

std::vector<InstanceRecord> bandpass_filter(const std::vector<InstanceRecord>& pool,
                                            const CurriculumConfig& cfg) {
  cfg.validate();
  std::vector<InstanceRecord> out;
  for (const auto& rec : pool) {
    if (!rec.difficulty.has_value()) {
      throw UnsetDifficultyError("difficulty unset for instance " + rec.id);
    }
    const int d = *rec.difficulty;
    if (cfg.d_min < d && d < cfg.d_max) out.push_back(rec);
  }
  return out;
}

SelectResult select_round(std::vector<InstanceRecord> pool,
                          const std::vector<InstanceRecord>& mid, double rho, int round,
                          Rng& rng) {
  const std::size_t take =
      mid.empty() ? 0 : static_cast<std::size_t>(std::ceil(rho * static_cast<double>(mid.size())));
  const std::vector<std::size_t> picks = sample_indices(mid.size(), take, rng);

  SelectResult result;
  std::set<std::string> selected_ids;
  for (std::size_t i : picks) {
    InstanceRecord rec = mid[i];
    rec.consumed_round = round;
    selected_ids.insert(rec.id);
    result.selected.push_back(std::move(rec));
  }
  for (auto& rec : pool) {
    if (selected_ids.count(rec.id)) continue;
    rec.difficulty.reset();  // re-estimated by the updated policy next round
    result.pool.push_back(std::move(rec));
  }
  return result;
}

std::vector<InstanceRecord> load_instances(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<InstanceRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    InstanceRecord inst;
    inst.id = rec.at("id").get<std::string>();
    inst.question = rec.at("question").get<std::string>();
    inst.db_name = rec.value("collection", "");
    inst.complexity = rec.value("complexity", "");
    const std::string mql = rec.at("mql_text").get<std::string>();
    try {
      inst.reference = parse_pipeline(mql, inst.db_name);
    } catch (const SyntaxError& e) {
      throw IoError(path + ":" + std::to_string(lineno) + ": bad reference: " + e.what());
    }
    if (inst.db_name.empty()) inst.db_name = inst.reference.collection;
    out.push_back(std::move(inst));
  }
  return out;
}

void save_pool_snapshot(const std::string& path, const std::vector<InstanceRecord>& pool) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& rec : pool) {
    nlohmann::ordered_json j;
    j["id"] = rec.id;
    if (rec.difficulty) {
      j["difficulty"] = *rec.difficulty;
    } else {
      j["difficulty"] = nullptr;
    }
    if (rec.consumed_round) {
      j["consumed_round"] = *rec.consumed_round;
    } else {
      j["consumed_round"] = nullptr;
    }
    out << j.dump() << '\n';
  }
}

void apply_pool_snapshot(std::vector<InstanceRecord>& pool, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::map<std::string, std::pair<std::optional<int>, std::optional<int>>> state;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    std::optional<int> difficulty, consumed;
    if (j.contains("difficulty") && !j["difficulty"].is_null()) {
      difficulty = j["difficulty"].get<int>();
    }
    if (j.contains("consumed_round") && !j["consumed_round"].is_null()) {
      consumed = j["consumed_round"].get<int>();
    }
    state[j.at("id").get<std::string>()] = {difficulty, consumed};
  }
  std::vector<InstanceRecord> kept;
  for (auto& rec : pool) {
    auto it = state.find(rec.id);
    if (it == state.end()) continue;  // removed from the pool
    rec.difficulty = it->second.first;
    rec.consumed_round = it->second.second;
    kept.push_back(std::move(rec));
  }
  pool = std::move(kept);
}

}  // namespace dromql
