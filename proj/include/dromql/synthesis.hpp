#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "dromql/database.hpp"
#include "dromql/errors.hpp"
#include "dromql/executor.hpp"
#include "dromql/generator.hpp"
#include "dromql/rng.hpp"

namespace dromql {

struct SamplingMix {
  double random_frac = 0.5;
  double stratified_frac = 0.3;
  double rare_frac = 0.2;

  void validate() const {
    const double sum = random_frac + stratified_frac + rare_frac;
    if (random_frac < 0 || stratified_frac < 0 || rare_frac < 0 ||
        std::abs(sum - 1.0) > 1e-9) {
      throw ConfigError("sampling mix fractions must be non-negative and sum to 1");
    }
  }
};

enum class ComplexityLevel { Simple, Moderate, Complex };

std::string_view complexity_name(ComplexityLevel level);

struct ComplexityTargets {
  double simple = 0.3;
  double moderate = 0.4;
  double complex_frac = 0.3;
};

struct SynthIndicators {
  bool syn = false;      // the MQL parses
  bool exec = false;     // it executes without error
  bool valid = false;    // results non-empty and free of nulls/empty strings
  bool consist = false;  // the NL mention covers the query's literal values
};

struct SynthCandidate {
  std::string reasoning;
  std::string nl;
  std::string mql_text;
  std::optional<Pipeline> mql;
  SynthIndicators indicators;
  double score = 0;
};

struct SynthConfig {
  std::array<double, 4> weights = {0.3, 0.3, 0.2, 0.2};  // syn, exec, valid, consist
  double threshold = 0.8;
  int candidates_min = 5;
  int candidates_max = 8;
  int target_count = 10;
  int sample_budget = 10;
  int max_stalled_intents = 50;  // consecutive intents without a keep
  SamplingMix mix;
  ComplexityTargets targets;

  void validate() const;
};

// Mixed budget split: floor(random)+floor(stratified) plus a rare-value
// remainder holding numeric min/max extremes; deterministic under the rng.
std::vector<Document> sample_representative(const Database& db, const std::string& collection,
                                            int budget, const SamplingMix& mix, Rng& rng);

// The level with the largest target deficit; ties resolve Simple < Moderate
// < Complex.
ComplexityLevel pick_complexity(const std::array<int, 3>& produced,
                                const ComplexityTargets& targets);

// Parses a candidate reply: optional <think> prefix, then an (nl, mql)
// JSON object, fenced or bare.
SynthCandidate parse_synth_candidate(std::string_view raw, const std::string& collection);

// Fills indicators from the execution outcome and returns the weighted score.
double quality_score(SynthCandidate& candidate, const ExecOutcome& exec_outcome,
                     const SynthConfig& cfg);

struct SynthSample {
  std::string id;
  std::string nl;
  std::string mql_text;
  std::string collection;
  std::string complexity;
  double score = 0;
  std::string reasoning;
};

struct SynthResult {
  std::vector<SynthSample> samples;
  bool stalled = false;
  int intents_attempted = 0;
};

std::string build_synth_prompt(const std::string& schema_text,
                               const std::vector<Document>& sample_docs,
                               ComplexityLevel level, const std::string& collection);

// Execution-guided rejection sampling: per intent, draw N in
// [candidates_min, candidates_max] candidates, keep the argmax iff its
// score clears the threshold; stops early (stalled) after too many barren
// intents.
SynthResult synthesize(const Database& db, Generator& generator, const SynthConfig& cfg,
                       Rng& rng);

// Drops duplicate (normalized nl, canonical mql) pairs, keeping the first.
std::vector<SynthSample> dedupe_clean(std::vector<SynthSample> samples);

void write_synth_jsonl(const std::string& path, const std::vector<SynthSample>& samples);

}  // namespace dromql
