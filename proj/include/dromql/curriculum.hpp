#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dromql/ast.hpp"
#include "dromql/errors.hpp"
#include "dromql/rng.hpp"

namespace dromql {

struct InstanceRecord {
  std::string id;
  std::string question;
  Pipeline reference;
  std::string db_name;  // target collection
  std::string complexity;
  std::optional<int> difficulty;
  std::optional<int> consumed_round;
};

struct CurriculumConfig {
  int n_rollouts = 9;                          // N
  int d_min = 1;                               // strict lower bound
  int d_max = 8;                               // strict upper bound
  std::vector<double> retention = {0.5, 0.5, 1.0};
  std::uint64_t seed = 0;

  void validate() const {
    if (!(0 <= d_min && d_min < d_max && d_max <= n_rollouts)) {
      throw ConfigError("need 0 <= d_min < d_max <= n_rollouts");
    }
    for (double rho : retention) {
      if (!(rho > 0 && rho <= 1)) throw ConfigError("retention ratios must be in (0, 1]");
    }
  }
};

// Samples one response for rollout j of the instance; may throw.
using ResponseSampler = std::function<std::string(const InstanceRecord&, int)>;
// Fuzzy-execution correctness of a sampled response.
using CorrectnessJudge = std::function<bool(const InstanceRecord&, const std::string&)>;

// N minus the number of correct rollouts; sampler failures count as
// incorrect.
int estimate_difficulty(const InstanceRecord& instance, const ResponseSampler& generate,
                        const CorrectnessJudge& judge, int n_rollouts);

// Exactly the records with d_min < difficulty < d_max, input order kept.
// Throws UnsetDifficultyError when any difficulty is unset.
std::vector<InstanceRecord> bandpass_filter(const std::vector<InstanceRecord>& pool,
                                            const CurriculumConfig& cfg);

struct SelectResult {
  std::vector<InstanceRecord> selected;
  std::vector<InstanceRecord> pool;  // selected removed, difficulties reset
};

// Draws ceil(rho * |mid|) of the mid-band uniformly without replacement,
// marks them consumed at this round and resets the survivors' difficulty
// for re-estimation.
SelectResult select_round(std::vector<InstanceRecord> pool,
                          const std::vector<InstanceRecord>& mid, double rho, int round,
                          Rng& rng);

// Training-instance JSONL: {id, question, mql_text, collection, ...}.
std::vector<InstanceRecord> load_instances(const std::string& path);

// Per-round pool snapshot: {id, difficulty, consumed_round} records.
void save_pool_snapshot(const std::string& path, const std::vector<InstanceRecord>& pool);
void apply_pool_snapshot(std::vector<InstanceRecord>& pool, const std::string& path);

}  // namespace dromql
