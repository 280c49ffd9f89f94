#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dromql/errors.hpp"
#include "dromql/evidence.hpp"
#include "dromql/rng.hpp"

namespace dromql {

// One rollout: per-token log-probabilities under the current and the
// snapshot policy, plus its scalar reward.
struct Trajectory {
  std::vector<double> logps_new;
  std::vector<double> logps_old;
  double reward = 0;

  std::size_t length() const { return logps_new.size(); }
};

struct RolloutGroup {
  std::string prompt_id;
  std::vector<Trajectory> trajectories;
};

struct GspoConfig {
  double clip_epsilon = 0.2;  // sequence-level clip half-width

  void validate() const {
    if (clip_epsilon <= 0) throw ConfigError("clip_epsilon must be positive");
  }
};

// Geometric mean of token-wise likelihood ratios, computed in log space.
// Throws LengthMismatchError when the two log-prob lists differ in length.
double seq_importance_ratio(const Trajectory& t);

// Group-standardized advantages: (r - mean) / (pop std + 1e-8).
// Throws GroupTooSmallError below two rewards.
std::vector<double> group_advantages(const std::vector<double>& rewards);

struct ObjectiveResult {
  double value = 0;
  // dJ/d(mean log ratio) per trajectory, flattened in group order; zero
  // exactly where clipping blocks the gradient.
  std::vector<double> per_traj_weight;
};

ObjectiveResult gspo_objective(const std::vector<RolloutGroup>& groups, const GspoConfig& cfg);

// ---------------------------------------------------------------------------
// Toy categorical policy over a finite candidate set (single-token sequences).

struct ToyPolicy {
  std::vector<double> logits;

  explicit ToyPolicy(std::size_t n = 0) : logits(n, 0.0) {}
  std::vector<double> probs() const;
  double logp(std::size_t candidate) const;
  std::size_t sample(Rng& rng) const;
};

// A rollout recorded as a candidate index; the policy supplies log-probs.
struct IndexedTrajectory {
  std::size_t candidate = 0;
  double logp_old = 0;
  double reward = 0;
};

struct IndexedGroup {
  std::string prompt_id;
  std::vector<IndexedTrajectory> items;
};

struct IndexedObjective {
  double value = 0;
  std::vector<double> grad_logits;
};

// Objective and its analytic gradient with respect to the policy logits,
// for fixed sampled groups.
IndexedObjective indexed_objective(const ToyPolicy& policy,
                                   const std::vector<IndexedGroup>& groups,
                                   const GspoConfig& cfg);

// Gradient-ascent steps on fixed groups (old log-probs stay fixed).
ToyPolicy ascend_on_groups(ToyPolicy policy, const std::vector<IndexedGroup>& groups,
                           const GspoConfig& cfg, int steps, double lr);

struct ToyTrainConfig {
  int steps = 200;
  double lr = 0.1;
  int group_size = 8;
  int groups_per_step = 8;
  std::uint64_t seed = 1;
};

struct ToyTrainResult {
  ToyPolicy policy;
  std::vector<double> best_prob_trace;  // probability of the best-reward candidate
  std::vector<double> expected_reward_trace;
};

// Groups are resampled each step from the current policy; the snapshot at
// step start plays the old policy. Throws DegenerateRewardsError when all
// rewards are equal.
ToyTrainResult train_toy_policy(const std::vector<double>& candidate_rewards,
                                const ToyTrainConfig& train_cfg, const GspoConfig& cfg);

// ---------------------------------------------------------------------------
// Batch export for external trainers.

struct ExportRecord {
  std::string prompt_id;
  std::string prompt_text;
  std::string response_text;
  double reward = 0;
  double r_res = 0;
  double r_over = 0;
  std::size_t group_index = 0;
  ContextFlags context_flags;

  friend bool operator==(const ExportRecord&, const ExportRecord&) = default;
};

// JSONL: one header record {schema_version, kind}, then one record per
// trajectory. Throws IoError.
void export_batch(const std::string& path, const std::vector<ExportRecord>& records);
std::vector<ExportRecord> read_batch(const std::string& path);

}  // namespace dromql
