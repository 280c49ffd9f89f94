#pragma once

#include <string_view>

#include "dromql/errors.hpp"
#include "dromql/executor.hpp"

namespace dromql {

struct RewardConfig {
  int tau_overfield = 3;  // extra returned fields tolerated before the cut
  double lambda = 0.2;    // overlong penalty magnitude
  int l_max = 4096;       // hard response-length budget, tokens
  int l_cache = 512;      // soft buffer before l_max

  void validate() const {
    if (l_cache <= 0 || l_cache >= l_max) throw ConfigError("need 0 < l_cache < l_max");
    if (lambda < 0) throw ConfigError("lambda must be non-negative");
    if (tau_overfield < 0) throw ConfigError("tau_overfield must be non-negative");
  }
};

struct RewardRecord {
  double r_res = 0;
  double r_over = 0;
  double total = 0;
};

// -1.0 on parse/execution failure; 0.1 when executable but wrong; 0.25 when
// correct but returning more than tau extra fields; 1.0 otherwise.
double result_reward(const ExecOutcome& outcome, const ExecOutcome& ref,
                     const RewardConfig& cfg, bool ordered);

// 0 up to l_max - l_cache, then linear down to -lambda at l_max, clamped.
double overlong_penalty(int len_tokens, const RewardConfig& cfg);

RewardRecord total_reward(const ExecOutcome& outcome, const ExecOutcome& ref, int len_tokens,
                          const RewardConfig& cfg, bool ordered);

// Default length measure: whitespace-delimited units.
int count_tokens(std::string_view text);

}  // namespace dromql
