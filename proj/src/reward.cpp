#include "dromql/reward.hpp"

#include <cctype>

#include "dromql/metrics.hpp"

namespace dromql {

double result_reward(const ExecOutcome& outcome, const ExecOutcome& ref,
                     const RewardConfig& cfg, bool ordered) {
  if (!outcome.ok()) return -1.0;
  if (!fuzzy_match(outcome.rows, ref.rows, ordered)) return 0.1;
  const std::size_t got_fields = returned_field_set(outcome.rows).size();
  const std::size_t ref_fields = returned_field_set(ref.rows).size();
  if (got_fields > ref_fields + static_cast<std::size_t>(cfg.tau_overfield)) return 0.25;
  return 1.0;
}

double overlong_penalty(int len_tokens, const RewardConfig& cfg) {
  const int soft = cfg.l_max - cfg.l_cache;
  if (len_tokens <= soft) return 0.0;
  if (len_tokens > cfg.l_max) return -cfg.lambda;
  return -cfg.lambda * static_cast<double>(len_tokens - soft) / cfg.l_cache;
}

RewardRecord total_reward(const ExecOutcome& outcome, const ExecOutcome& ref, int len_tokens,
                          const RewardConfig& cfg, bool ordered) {
  RewardRecord rec;
  rec.r_res = result_reward(outcome, ref, cfg, ordered);
  rec.r_over = overlong_penalty(len_tokens, cfg);
  rec.total = rec.r_res + rec.r_over;
  return rec;
}

int count_tokens(std::string_view text) {
  int count = 0;
  bool in_token = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++count;
    }
  }
  return count;
}

}  // namespace dromql
