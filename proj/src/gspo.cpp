#include "dromql/gspo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace dromql {

double seq_importance_ratio(const Trajectory& t) {
  if (t.logps_new.size() != t.logps_old.size()) {
    throw LengthMismatchError("trajectory log-prob lists differ in length");
  }
  if (t.logps_new.empty()) {
    throw LengthMismatchError("trajectory must have at least one token");
  }
  double sum = 0;
  for (std::size_t i = 0; i < t.logps_new.size(); ++i) {
    sum += t.logps_new[i] - t.logps_old[i];
  }
  return std::exp(sum / static_cast<double>(t.logps_new.size()));
}

std::vector<double> group_advantages(const std::vector<double>& rewards) {
  if (rewards.size() < 2) {
    throw GroupTooSmallError("advantage standardization needs at least 2 rewards");
  }
  double mean = 0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(rewards.size());
  double var = 0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(rewards.size());
  const double denom = std::sqrt(var) + 1e-8;
  std::vector<double> out;
  out.reserve(rewards.size());
  for (double r : rewards) out.push_back((r - mean) / denom);
  return out;
}

ObjectiveResult gspo_objective(const std::vector<RolloutGroup>& groups, const GspoConfig& cfg) {
  cfg.validate();
  ObjectiveResult result;
  if (groups.empty()) return result;

  const double lo = 1.0 - cfg.clip_epsilon;
  const double hi = 1.0 + cfg.clip_epsilon;
  double total = 0;
  for (const auto& group : groups) {
    std::vector<double> rewards;
    rewards.reserve(group.trajectories.size());
    for (const auto& t : group.trajectories) rewards.push_back(t.reward);
    const std::vector<double> adv = group_advantages(rewards);

    const double group_norm =
        1.0 / (static_cast<double>(group.trajectories.size()) * groups.size());
    double group_sum = 0;
    for (std::size_t i = 0; i < group.trajectories.size(); ++i) {
      const double s = seq_importance_ratio(group.trajectories[i]);
      const double clipped = std::clamp(s, lo, hi);
      group_sum += std::min(s * adv[i], clipped * adv[i]);
      const bool blocked = (s > hi && adv[i] > 0) || (s < lo && adv[i] < 0);
      result.per_traj_weight.push_back(blocked ? 0.0 : s * adv[i] * group_norm);
    }
    total += group_sum / static_cast<double>(group.trajectories.size());
  }
  result.value = total / static_cast<double>(groups.size());
  return result;
}

std::vector<double> ToyPolicy::probs() const {
  std::vector<double> p(logits.size());
  double max_logit = logits.empty() ? 0 : *std::max_element(logits.begin(), logits.end());
  double z = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - max_logit);
    z += p[i];
  }
  for (double& x : p) x /= z;
  return p;
}

double ToyPolicy::logp(std::size_t candidate) const {
  const auto p = probs();
  return std::log(p[candidate]);
}

std::size_t ToyPolicy::sample(Rng& rng) const {
  const auto p = probs();
  double u = rng.unit();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (u < p[i]) return i;
    u -= p[i];
  }
  return p.size() - 1;
}

IndexedObjective indexed_objective(const ToyPolicy& policy,
                                   const std::vector<IndexedGroup>& groups,
                                   const GspoConfig& cfg) {
  std::vector<RolloutGroup> rollout_groups;
  rollout_groups.reserve(groups.size());
  for (const auto& g : groups) {
    RolloutGroup rg;
    rg.prompt_id = g.prompt_id;
    for (const auto& item : g.items) {
      rg.trajectories.push_back(
          Trajectory{{policy.logp(item.candidate)}, {item.logp_old}, item.reward});
    }
    rollout_groups.push_back(std::move(rg));
  }
  const ObjectiveResult obj = gspo_objective(rollout_groups, cfg);

  IndexedObjective out;
  out.value = obj.value;
  out.grad_logits.assign(policy.logits.size(), 0.0);
  const std::vector<double> p = policy.probs();
  std::size_t flat = 0;
  for (const auto& g : groups) {
    for (const auto& item : g.items) {
      const double w = obj.per_traj_weight[flat++];
      if (w == 0.0) continue;
      // d log softmax(z)[k] / d z_j = [j == k] - p_j
      for (std::size_t j = 0; j < out.grad_logits.size(); ++j) {
        out.grad_logits[j] += w * ((j == item.candidate ? 1.0 : 0.0) - p[j]);
      }
    }
  }
  return out;
}

ToyPolicy ascend_on_groups(ToyPolicy policy, const std::vector<IndexedGroup>& groups,
                           const GspoConfig& cfg, int steps, double lr) {
  for (int s = 0; s < steps; ++s) {
    const IndexedObjective obj = indexed_objective(policy, groups, cfg);
    for (std::size_t j = 0; j < policy.logits.size(); ++j) {
      policy.logits[j] += lr * obj.grad_logits[j];
    }
  }
  return policy;
}

ToyTrainResult train_toy_policy(const std::vector<double>& candidate_rewards,
                                const ToyTrainConfig& train_cfg, const GspoConfig& cfg) {
  if (candidate_rewards.size() < 2) {
    throw DegenerateRewardsError("need at least 2 candidates");
  }
  const double first = candidate_rewards.front();
  bool varied = false;
  for (double r : candidate_rewards) varied = varied || r != first;
  if (!varied) throw DegenerateRewardsError("all candidate rewards are equal");

  const std::size_t best = static_cast<std::size_t>(
      std::max_element(candidate_rewards.begin(), candidate_rewards.end()) -
      candidate_rewards.begin());

  ToyTrainResult result;
  result.policy = ToyPolicy(candidate_rewards.size());
  Rng rng(train_cfg.seed);

  for (int step = 0; step < train_cfg.steps; ++step) {
    const ToyPolicy snapshot = result.policy;  // old policy for this step
    std::vector<IndexedGroup> groups;
    for (int g = 0; g < train_cfg.groups_per_step; ++g) {
      IndexedGroup group;
      group.prompt_id = "step" + std::to_string(step) + "g" + std::to_string(g);
      for (int i = 0; i < train_cfg.group_size; ++i) {
        const std::size_t k = snapshot.sample(rng);
        group.items.push_back(IndexedTrajectory{k, snapshot.logp(k), candidate_rewards[k]});
      }
      groups.push_back(std::move(group));
    }
    result.policy = ascend_on_groups(std::move(result.policy), groups, cfg, 1, train_cfg.lr);

    const auto p = result.policy.probs();
    result.best_prob_trace.push_back(p[best]);
    double expected = 0;
    for (std::size_t i = 0; i < p.size(); ++i) expected += p[i] * candidate_rewards[i];
    result.expected_reward_trace.push_back(expected);
  }
  return result;
}

void export_batch(const std::string& path, const std::vector<ExportRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  nlohmann::ordered_json header;
  header["schema_version"] = 1;
  header["kind"] = "rollout_batch";
  out << header.dump() << '\n';
  for (const auto& rec : records) {
    nlohmann::ordered_json j;
    j["prompt_id"] = rec.prompt_id;
    j["prompt_text"] = rec.prompt_text;
    j["response_text"] = rec.response_text;
    j["reward"] = rec.reward;
    j["r_res"] = rec.r_res;
    j["r_over"] = rec.r_over;
    j["group_index"] = rec.group_index;
    j["context_flags"] = {{"mschema", rec.context_flags.use_mschema},
                          {"link", rec.context_flags.use_link},
                          {"ground", rec.context_flags.use_ground}};
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

std::vector<ExportRecord> read_batch(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("missing header in " + path);
  const auto header = nlohmann::json::parse(line);
  if (header.value("kind", "") != "rollout_batch") {
    throw IoError("unexpected batch kind in " + path);
  }
  std::vector<ExportRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    ExportRecord rec;
    rec.prompt_id = j.at("prompt_id").get<std::string>();
    rec.prompt_text = j.at("prompt_text").get<std::string>();
    rec.response_text = j.at("response_text").get<std::string>();
    rec.reward = j.at("reward").get<double>();
    rec.r_res = j.at("r_res").get<double>();
    rec.r_over = j.at("r_over").get<double>();
    rec.group_index = j.at("group_index").get<std::size_t>();
    const auto& flags = j.at("context_flags");
    rec.context_flags.use_mschema = flags.at("mschema").get<bool>();
    rec.context_flags.use_link = flags.at("link").get<bool>();
    rec.context_flags.use_ground = flags.at("ground").get<bool>();
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace dromql
