#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dromql/curriculum.hpp"
#include "dromql/database.hpp"
#include "dromql/embedding.hpp"
#include "dromql/evidence.hpp"
#include "dromql/generator.hpp"
#include "dromql/gspo.hpp"
#include "dromql/metrics.hpp"
#include "dromql/reward.hpp"
#include "dromql/schema.hpp"

namespace dromql {

struct EvidenceConfig {
  int k = 5;
  int dim = 256;
};

struct GeneratorConfig {
  std::string type = "mock";  // mock | http | stub
  std::string fixtures;       // mock: fixture directory
  HttpGeneratorConfig http;
  SamplingParams params;
};

struct RunConfig {
  std::string db_dir;
  std::string annotations;  // optional sidecar
  std::string dataset;
  int holdout_count = 5;  // trailing instances held out for evaluation
  int iterations = 3;
  std::string mode = "toy";  // toy | export
  std::uint64_t seed = 7;
  int workers = 1;
  int halt_after_round = 0;  // checkpoint testing hook; 0 disables

  RewardConfig reward;
  CurriculumConfig curriculum;
  GspoConfig gspo;
  int group_size = 8;  // G rollouts per selected instance
  int opt_steps = 30;
  double lr = 0.1;
  EvidenceConfig evidence;
  GeneratorConfig generator;
  std::string templates_dir = "assets/templates";
  std::string run_dir = "runs/default";

  // Relative paths resolve against the config file's directory.
  static RunConfig load(const std::string& path);
  void validate() const;
};

// Database, schemas, vector indexes and templates for one run.
class Workspace {
 public:
  static Workspace open(const RunConfig& cfg);

  const Database& db() const { return db_; }
  const SchemaTree& schema(const std::string& collection) const;
  const FieldIndex& index(const std::string& collection) const;
  const PromptTemplates& templates() const { return templates_; }
  const Embedder& embedder() const { return embedder_; }
  int k() const { return k_; }

 private:
  Database db_;
  std::map<std::string, SchemaTree> schemas_;
  std::map<std::string, FieldIndex> indexes_;
  PromptTemplates templates_;
  TrigramEmbedder embedder_{256};
  int k_ = 5;
};

std::unique_ptr<Generator> make_generator(const GeneratorConfig& cfg,
                                          const std::vector<InstanceRecord>& stub_instances);

// ---------------------------------------------------------------------------
// Evaluation

struct InstanceEval {
  std::string id;
  MetricRow row;
  RewardRecord reward;
  std::string error;  // per-instance failure note; never aborts the run
};

struct EvalReport {
  std::vector<InstanceEval> rows;
  MetricAggregate aggregate;
};

// Draft, optionally refine under the flags, execute, score.
EvalReport run_eval(const Workspace& ws, const std::vector<InstanceRecord>& instances,
                    Generator& generator, ContextFlags flags, const RewardConfig& reward_cfg,
                    const SamplingParams& params, int workers);

void write_eval_jsonl(const std::string& path, const EvalReport& report);
std::string format_eval_table(const EvalReport& report);

// ---------------------------------------------------------------------------
// The DRO loop

struct RoundSummary {
  int round = 0;
  std::size_t pool_size = 0;
  std::size_t mid_size = 0;
  std::size_t selected = 0;
  double holdout_cof = 0;
  double holdout_ops = 0;
};

struct DroResult {
  int rounds_completed = 0;
  bool halted_early = false;
  double baseline_cof = 0;
  std::vector<RoundSummary> rounds;
};

// Runs (or resumes) the Draft-Refine-Optimize loop, persisting per-round
// artifacts under cfg.run_dir.
DroResult run_dro(const RunConfig& cfg);

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace dromql
