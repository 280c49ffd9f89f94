#include "dromql/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "dromql/parser.hpp"

namespace fs = std::filesystem;

namespace dromql {

namespace {

constexpr int kStrategyCount = 8;

std::string resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return p;
  fs::path path(p);
  if (path.is_absolute()) return path.string();
  return (base / path).lexically_normal().string();
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json j;
  in >> j;
  return j;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << text;
}

Rng make_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return Rng(mix_seed(mix_seed(mix_seed(seed, a), b), c));
}

std::string strategy_name(int index) {
  const ContextFlags f = ContextFlags::from_index(index);
  if (!f.use_mschema && !f.use_link && !f.use_ground) return "draft";
  std::string name;
  if (f.use_mschema) name += "mschema";
  if (f.use_link) name += name.empty() ? "link" : "+link";
  if (f.use_ground) name += name.empty() ? "ground" : "+ground";
  return name;
}

}  // namespace

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  if (workers <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> threads;
  std::mutex err_mu;
  std::exception_ptr first_error;
  const int count = std::min<int>(workers, static_cast<int>(n));
  for (int w = 0; w < count; ++w) {
    threads.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Config

RunConfig RunConfig::load(const std::string& path) {
  const nlohmann::json j = read_json_file(path);
  const fs::path base = fs::path(path).parent_path();
  RunConfig cfg;
  cfg.db_dir = resolve(base, j.value("db_dir", ""));
  cfg.annotations = resolve(base, j.value("annotations", ""));
  cfg.dataset = resolve(base, j.value("dataset", ""));
  cfg.holdout_count = j.value("holdout_count", cfg.holdout_count);
  cfg.iterations = j.value("iterations", cfg.iterations);
  cfg.mode = j.value("mode", cfg.mode);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.workers = j.value("workers", cfg.workers);
  cfg.halt_after_round = j.value("halt_after_round", cfg.halt_after_round);
  if (j.contains("reward")) {
    const auto& r = j["reward"];
    cfg.reward.tau_overfield = r.value("tau_overfield", cfg.reward.tau_overfield);
    cfg.reward.lambda = r.value("lambda", cfg.reward.lambda);
    cfg.reward.l_max = r.value("l_max", cfg.reward.l_max);
    cfg.reward.l_cache = r.value("l_cache", cfg.reward.l_cache);
  }
  if (j.contains("curriculum")) {
    const auto& c = j["curriculum"];
    cfg.curriculum.n_rollouts = c.value("n_rollouts", cfg.curriculum.n_rollouts);
    cfg.curriculum.d_min = c.value("d_min", cfg.curriculum.d_min);
    cfg.curriculum.d_max = c.value("d_max", cfg.curriculum.d_max);
    if (c.contains("retention")) {
      cfg.curriculum.retention = c["retention"].get<std::vector<double>>();
    }
  }
  if (j.contains("gspo")) {
    cfg.gspo.clip_epsilon = j["gspo"].value("clip_epsilon", cfg.gspo.clip_epsilon);
  }
  cfg.group_size = j.value("group_size", cfg.group_size);
  cfg.opt_steps = j.value("opt_steps", cfg.opt_steps);
  cfg.lr = j.value("lr", cfg.lr);
  if (j.contains("evidence")) {
    cfg.evidence.k = j["evidence"].value("k", cfg.evidence.k);
    cfg.evidence.dim = j["evidence"].value("dim", cfg.evidence.dim);
  }
  if (j.contains("generator")) {
    const auto& g = j["generator"];
    cfg.generator.type = g.value("type", cfg.generator.type);
    cfg.generator.fixtures = resolve(base, g.value("fixtures", ""));
    if (g.contains("http")) {
      const auto& h = g["http"];
      cfg.generator.http.base_url = h.value("base_url", "");
      cfg.generator.http.path = h.value("path", cfg.generator.http.path);
      cfg.generator.http.model = h.value("model", "");
      cfg.generator.http.api_key_env = h.value("api_key_env", cfg.generator.http.api_key_env);
      cfg.generator.http.timeout_seconds =
          h.value("timeout_seconds", cfg.generator.http.timeout_seconds);
      cfg.generator.http.max_retries = h.value("max_retries", cfg.generator.http.max_retries);
      cfg.generator.http.backoff_ms = h.value("backoff_ms", cfg.generator.http.backoff_ms);
    }
    if (g.contains("params")) {
      const auto& p = g["params"];
      cfg.generator.params.temperature = p.value("temperature", 0.7);
      cfg.generator.params.top_p = p.value("top_p", 0.95);
      cfg.generator.params.max_tokens = p.value("max_tokens", 4096);
    }
  }
  cfg.templates_dir = resolve(base, j.value("templates_dir", cfg.templates_dir));
  cfg.run_dir = resolve(base, j.value("run_dir", cfg.run_dir));
  cfg.validate();
  return cfg;
}

void RunConfig::validate() const {
  if (db_dir.empty() || !fs::is_directory(db_dir)) {
    throw ConfigError("db_dir does not exist: " + db_dir);
  }
  if (dataset.empty() || !fs::exists(dataset)) {
    throw ConfigError("dataset does not exist: " + dataset);
  }
  if (!annotations.empty() && !fs::exists(annotations)) {
    throw ConfigError("annotations file does not exist: " + annotations);
  }
  if (!fs::is_directory(templates_dir)) {
    throw ConfigError("templates_dir does not exist: " + templates_dir);
  }
  if (iterations < 1) throw ConfigError("iterations must be at least 1");
  if (mode != "toy" && mode != "export") throw ConfigError("mode must be toy or export");
  if (group_size < 2) throw ConfigError("group_size must be at least 2");
  if (workers < 1) throw ConfigError("workers must be at least 1");
  reward.validate();
  curriculum.validate();
  gspo.validate();
  generator.params.validate();
  if (generator.type != "mock" && generator.type != "http" && generator.type != "stub") {
    throw ConfigError("generator.type must be mock, http or stub");
  }
}

// ---------------------------------------------------------------------------
// Workspace

Workspace Workspace::open(const RunConfig& cfg) {
  Workspace ws;
  ws.db_ = load_database_dir(cfg.db_dir);
  ws.embedder_ = TrigramEmbedder(cfg.evidence.dim);
  ws.k_ = cfg.evidence.k;
  for (const auto& name : ws.db_.collection_names()) {
    SchemaTree schema = infer_schema(ws.db_, name);
    if (!cfg.annotations.empty()) apply_annotations(schema, cfg.annotations);
    ws.indexes_.emplace(name, FieldIndex::build(schema, ws.embedder_));
    ws.schemas_.emplace(name, std::move(schema));
  }
  ws.templates_ = PromptTemplates::load(cfg.templates_dir);
  return ws;
}

const SchemaTree& Workspace::schema(const std::string& collection) const {
  auto it = schemas_.find(collection);
  if (it == schemas_.end()) throw UnknownCollectionError("no schema for " + collection);
  return it->second;
}

const FieldIndex& Workspace::index(const std::string& collection) const {
  auto it = indexes_.find(collection);
  if (it == indexes_.end()) throw UnknownCollectionError("no index for " + collection);
  return it->second;
}

std::unique_ptr<Generator> make_generator(const GeneratorConfig& cfg,
                                          const std::vector<InstanceRecord>& stub_instances) {
  if (cfg.type == "mock") {
    if (cfg.fixtures.empty()) throw ConfigError("mock generator needs a fixtures directory");
    return std::make_unique<MockGenerator>(cfg.fixtures);
  }
  if (cfg.type == "stub") return std::make_unique<StubGenerator>(stub_instances);
  if (cfg.http.base_url.empty()) throw ConfigError("http generator needs base_url");
  return std::make_unique<HttpGenerator>(cfg.http);
}

// ---------------------------------------------------------------------------
// Shared generation path

namespace {

std::optional<Pipeline> try_parse_response_text(const std::string& text) {
  try {
    return parse_response(text);
  } catch (const SyntaxError&) {
    return std::nullopt;
  }
}

struct DraftResult {
  std::string text;
  std::optional<Pipeline> pipeline;
};

DraftResult make_draft(const Workspace& ws, const InstanceRecord& inst, Generator& gen,
                       const SamplingParams& params) {
  const BuiltPrompt prompt =
      build_draft_prompt(inst.question, render_ts(ws.schema(inst.db_name)), ws.templates());
  GenRequest req;
  req.user = prompt.text;
  req.params = params;
  DraftResult out;
  out.text = gen.generate(req).text;
  out.pipeline = try_parse_response_text(out.text);
  return out;
}

struct FinalResult {
  std::string text;
  ExecOutcome outcome = ExecOutcome::make_syntax("not generated");
};

FinalResult make_final(const Workspace& ws, const InstanceRecord& inst,
                       const DraftResult& draft, ContextFlags flags, Generator& gen,
                       const SamplingParams& params, std::string* prompt_out = nullptr) {
  FinalResult out;
  if (flags == ContextFlags{}) {
    out.text = draft.text;  // the draft context is the draft response
    if (prompt_out != nullptr) {
      *prompt_out =
          build_draft_prompt(inst.question, render_ts(ws.schema(inst.db_name)), ws.templates())
              .text;
    }
  } else {
    const EvidenceContext ctx =
        assemble_context(inst.question, ws.schema(inst.db_name), draft.pipeline, flags, ws.db(),
                         ws.index(inst.db_name), ws.k(), ws.embedder());
    const BuiltPrompt prompt = build_refined_prompt(ctx, ws.templates());
    if (prompt_out != nullptr) *prompt_out = prompt.text;
    GenRequest req;
    req.user = prompt.text;
    req.params = params;
    out.text = gen.generate(req).text;
  }
  const auto parsed = try_parse_response_text(out.text);
  if (!parsed) {
    out.outcome = ExecOutcome::make_syntax("response did not parse");
  } else {
    out.outcome = execute(*parsed, ws.db());
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Evaluation

EvalReport run_eval(const Workspace& ws, const std::vector<InstanceRecord>& instances,
                    Generator& generator, ContextFlags flags, const RewardConfig& reward_cfg,
                    const SamplingParams& params, int workers) {
  EvalReport report;
  report.rows.resize(instances.size());
  parallel_for(instances.size(), workers, [&](std::size_t i) {
    InstanceEval& eval = report.rows[i];
    eval.id = instances[i].id;
    try {
      const ExecOutcome ref = execute(instances[i].reference, ws.db());
      if (!ref.ok()) {
        eval.error = "reference failed: " + ref.error_message;
        return;
      }
      const DraftResult draft = make_draft(ws, instances[i], generator, params);
      const FinalResult final_result =
          make_final(ws, instances[i], draft, flags, generator, params);
      const bool ordered = result_is_ordered(instances[i].reference);
      eval.row = score_instance(final_result.outcome, ref, ordered);
      eval.reward = total_reward(final_result.outcome, ref, count_tokens(final_result.text),
                                 reward_cfg, ordered);
    } catch (const std::exception& e) {
      eval.error = e.what();
    }
  });
  for (const auto& row : report.rows) report.aggregate.add(row.row);
  return report;
}

void write_eval_jsonl(const std::string& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& r : report.rows) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["se"] = r.row.se;
    j["neo"] = r.row.neo;
    j["ro"] = r.row.ro;
    j["cof"] = r.row.cof;
    j["r_res"] = r.reward.r_res;
    j["r_over"] = r.reward.r_over;
    j["reward"] = r.reward.total;
    if (!r.error.empty()) j["error"] = r.error;
    out << j.dump() << '\n';
  }
}

std::string format_eval_table(const EvalReport& report) {
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "  SE      NEO     RO      COF     OPS     (n=%zu)\n"
                "  %.3f   %.3f   %.3f   %.3f   %.3f\n",
                report.aggregate.count, report.aggregate.se_rate(), report.aggregate.neo_rate(),
                report.aggregate.ro_rate(), report.aggregate.cof_rate(), report.aggregate.ops());
  return buf;
}

// ---------------------------------------------------------------------------
// DRO loop

namespace {

struct PolicyFile {
  std::vector<double> logits;
};

void save_policy(const std::string& path, const ToyPolicy& policy) {
  nlohmann::ordered_json j;
  j["kind"] = "toy_policy";
  j["logits"] = policy.logits;
  nlohmann::ordered_json strategies = nlohmann::ordered_json::array();
  for (int i = 0; i < kStrategyCount; ++i) strategies.push_back(strategy_name(i));
  j["strategies"] = strategies;
  const auto probs = policy.probs();
  j["argmax"] = strategy_name(static_cast<int>(
      std::max_element(probs.begin(), probs.end()) - probs.begin()));
  write_text_file(path, j.dump(2) + "\n");
}

ToyPolicy load_policy(const std::string& path) {
  const auto j = read_json_file(path);
  ToyPolicy p;
  p.logits = j.at("logits").get<std::vector<double>>();
  return p;
}

int policy_argmax(const ToyPolicy& policy) {
  const auto probs = policy.probs();
  return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

struct RoundArtifacts {
  std::string dir;
  std::string pool_before() const { return dir + "/pool_before.jsonl"; }
  std::string pool_after() const { return dir + "/pool_after.jsonl"; }
  std::string selected() const { return dir + "/selected.json"; }
  std::string rewards() const { return dir + "/rewards.jsonl"; }
  std::string policy() const { return dir + "/policy.json"; }
  std::string batch() const { return dir + "/batch.jsonl"; }
  std::string metrics() const { return dir + "/metrics.json"; }
  std::string eval_rows() const { return dir + "/holdout_eval.jsonl"; }
};

void write_metrics_file(const std::string& path, int round, ContextFlags flags,
                        const EvalReport& report) {
  nlohmann::ordered_json j;
  j["round"] = round;
  j["eval_flags"] = {{"mschema", flags.use_mschema},
                     {"link", flags.use_link},
                     {"ground", flags.use_ground}};
  j["aggregate"] = {{"se", report.aggregate.se_rate()},
                    {"neo", report.aggregate.neo_rate()},
                    {"ro", report.aggregate.ro_rate()},
                    {"cof", report.aggregate.cof_rate()},
                    {"ops", report.aggregate.ops()},
                    {"count", report.aggregate.count}};
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace

DroResult run_dro(const RunConfig& cfg) {
  cfg.validate();
  const Workspace ws = Workspace::open(cfg);

  std::vector<InstanceRecord> all = load_instances(cfg.dataset);
  const std::size_t holdout_n =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(cfg.holdout_count, 0)),
                            all.size() > 1 ? all.size() - 1 : 0);
  std::vector<InstanceRecord> holdout(all.end() - static_cast<std::ptrdiff_t>(holdout_n),
                                      all.end());
  std::vector<InstanceRecord> pool(all.begin(),
                                   all.end() - static_cast<std::ptrdiff_t>(holdout_n));

  const std::unique_ptr<Generator> generator = make_generator(cfg.generator, all);

  fs::create_directories(cfg.run_dir);
  const std::string state_path = cfg.run_dir + "/state.json";

  int last_completed = 0;
  ToyPolicy policy(kStrategyCount);
  if (fs::exists(state_path)) {
    const auto state = read_json_file(state_path);
    last_completed = state.value("last_completed_round", 0);
    last_completed = std::min(last_completed, cfg.iterations);
    if (last_completed >= 1) {
      const RoundArtifacts prev{cfg.run_dir + "/round-" + std::to_string(last_completed)};
      apply_pool_snapshot(pool, prev.pool_after());
      if (cfg.mode == "toy") policy = load_policy(prev.policy());
    }
  }

  DroResult result;
  result.rounds_completed = last_completed;

  // Pre-training baseline on the held-out slice.
  const std::string baseline_dir = cfg.run_dir + "/baseline";
  if (!fs::exists(baseline_dir + "/metrics.json")) {
    fs::create_directories(baseline_dir);
    const ContextFlags flags = cfg.mode == "toy"
                                   ? ContextFlags::from_index(policy_argmax(policy))
                                   : ContextFlags{true, true, true};
    const EvalReport report = run_eval(ws, holdout, *generator, flags, cfg.reward,
                                       cfg.generator.params, cfg.workers);
    write_metrics_file(baseline_dir + "/metrics.json", 0, flags, report);
    write_eval_jsonl(baseline_dir + "/holdout_eval.jsonl", report);
  }
  result.baseline_cof =
      read_json_file(baseline_dir + "/metrics.json").at("aggregate").at("cof").get<double>();

  for (int round = last_completed + 1; round <= cfg.iterations; ++round) {
    const RoundArtifacts art{cfg.run_dir + "/round-" + std::to_string(round)};
    fs::create_directories(art.dir);

    // --- Draft: one draft per pool instance under the current policy's model.
    std::vector<DraftResult> drafts(pool.size());
    parallel_for(pool.size(), cfg.workers, [&](std::size_t i) {
      drafts[i] = make_draft(ws, pool[i], *generator, cfg.generator.params);
    });

    // --- Difficulty estimation with N rollouts per instance.
    parallel_for(pool.size(), cfg.workers, [&](std::size_t i) {
      const InstanceRecord& inst = pool[i];
      const ExecOutcome ref = execute(inst.reference, ws.db());
      const bool ordered = result_is_ordered(inst.reference);
      int correct = 0;
      for (int j = 0; j < cfg.curriculum.n_rollouts; ++j) {
        Rng rng = make_rng(cfg.seed, static_cast<std::uint64_t>(round),
                           hash_text(inst.id), 0xD1FF0000ull + static_cast<std::uint64_t>(j));
        const int strategy = cfg.mode == "toy" ? static_cast<int>(policy.sample(rng))
                                               : static_cast<int>(rng.below(kStrategyCount));
        try {
          const FinalResult final_result =
              make_final(ws, inst, drafts[i], ContextFlags::from_index(strategy), *generator,
                         cfg.generator.params);
          if (ref.ok() && score_instance(final_result.outcome, ref, ordered).cof) ++correct;
        } catch (const std::exception&) {
          // sampler failure counts as incorrect
        }
      }
      pool[i].difficulty = cfg.curriculum.n_rollouts - correct;
    });
    save_pool_snapshot(art.pool_before(), pool);

    // --- Band-pass and retention selection.
    const std::vector<InstanceRecord> mid = bandpass_filter(pool, cfg.curriculum);
    const double rho =
        cfg.curriculum.retention[std::min<std::size_t>(static_cast<std::size_t>(round - 1),
                                                       cfg.curriculum.retention.size() - 1)];
    Rng select_rng = make_rng(cfg.seed, static_cast<std::uint64_t>(round),
                              hash_text("select"), 0);
    SelectResult selection = select_round(std::move(pool), mid, rho, round, select_rng);
    pool = std::move(selection.pool);

    {
      nlohmann::ordered_json sel = nlohmann::ordered_json::array();
      for (const auto& rec : selection.selected) sel.push_back(rec.id);
      nlohmann::ordered_json j;
      j["round"] = round;
      j["rho"] = rho;
      j["mid_size"] = mid.size();
      j["selected"] = sel;
      write_text_file(art.selected(), j.dump(2) + "\n");
    }

    // --- Optimize: G rollouts per selected instance.
    struct RolloutRecord {
      std::string instance_id;
      int rollout = 0;
      int strategy = 0;
      RewardRecord reward;
      bool cof = false;
      std::string prompt_text;
      std::string response_text;
    };
    std::vector<std::vector<RolloutRecord>> rollouts(selection.selected.size());
    parallel_for(selection.selected.size(), cfg.workers, [&](std::size_t s) {
      const InstanceRecord& inst = selection.selected[s];
      const ExecOutcome ref = execute(inst.reference, ws.db());
      const bool ordered = result_is_ordered(inst.reference);
      DraftResult draft = make_draft(ws, inst, *generator, cfg.generator.params);
      for (int j = 0; j < cfg.group_size; ++j) {
        Rng rng = make_rng(cfg.seed, static_cast<std::uint64_t>(round),
                           hash_text(inst.id), 0x09070000ull + static_cast<std::uint64_t>(j));
        const int strategy = cfg.mode == "toy" ? static_cast<int>(policy.sample(rng))
                                               : static_cast<int>(rng.below(kStrategyCount));
        RolloutRecord rec;
        rec.instance_id = inst.id;
        rec.rollout = j;
        rec.strategy = strategy;
        try {
          const FinalResult final_result =
              make_final(ws, inst, draft, ContextFlags::from_index(strategy), *generator,
                         cfg.generator.params, &rec.prompt_text);
          rec.response_text = final_result.text;
          rec.reward = total_reward(final_result.outcome, ref,
                                    count_tokens(final_result.text), cfg.reward, ordered);
          rec.cof = ref.ok() && score_instance(final_result.outcome, ref, ordered).cof;
        } catch (const std::exception&) {
          rec.reward.r_res = -1.0;
          rec.reward.total = -1.0;
        }
        rollouts[s].push_back(std::move(rec));
      }
    });

    {
      std::ofstream out(art.rewards(), std::ios::trunc);
      if (!out) throw IoError("cannot write " + art.rewards());
      for (const auto& group : rollouts) {
        for (const auto& rec : group) {
          nlohmann::ordered_json j;
          j["instance_id"] = rec.instance_id;
          j["rollout"] = rec.rollout;
          j["strategy"] = strategy_name(rec.strategy);
          const ContextFlags f = ContextFlags::from_index(rec.strategy);
          j["flags"] = {{"mschema", f.use_mschema}, {"link", f.use_link},
                        {"ground", f.use_ground}};
          j["r_res"] = rec.reward.r_res;
          j["r_over"] = rec.reward.r_over;
          j["reward"] = rec.reward.total;
          j["cof"] = rec.cof;
          out << j.dump() << '\n';
        }
      }
    }

    if (cfg.mode == "toy") {
      std::vector<IndexedGroup> groups;
      for (std::size_t s = 0; s < rollouts.size(); ++s) {
        IndexedGroup group;
        group.prompt_id = selection.selected[s].id;
        for (const auto& rec : rollouts[s]) {
          group.items.push_back(IndexedTrajectory{
              static_cast<std::size_t>(rec.strategy),
              policy.logp(static_cast<std::size_t>(rec.strategy)), rec.reward.total});
        }
        groups.push_back(std::move(group));
      }
      if (!groups.empty()) {
        policy = ascend_on_groups(std::move(policy), groups, cfg.gspo, cfg.opt_steps, cfg.lr);
      }
      save_policy(art.policy(), policy);
    } else {
      std::vector<ExportRecord> records;
      for (std::size_t s = 0; s < rollouts.size(); ++s) {
        for (const auto& rec : rollouts[s]) {
          ExportRecord er;
          er.prompt_id = rec.instance_id;
          er.prompt_text = rec.prompt_text;
          er.response_text = rec.response_text;
          er.reward = rec.reward.total;
          er.r_res = rec.reward.r_res;
          er.r_over = rec.reward.r_over;
          er.group_index = s;
          er.context_flags = ContextFlags::from_index(rec.strategy);
          records.push_back(std::move(er));
        }
      }
      export_batch(art.batch(), records);
    }

    // --- Held-out evaluation under the updated policy.
    const ContextFlags eval_flags = cfg.mode == "toy"
                                        ? ContextFlags::from_index(policy_argmax(policy))
                                        : ContextFlags{true, true, true};
    const EvalReport report = run_eval(ws, holdout, *generator, eval_flags, cfg.reward,
                                       cfg.generator.params, cfg.workers);
    write_metrics_file(art.metrics(), round, eval_flags, report);
    write_eval_jsonl(art.eval_rows(), report);

    save_pool_snapshot(art.pool_after(), pool);

    {
      nlohmann::ordered_json state;
      state["last_completed_round"] = round;
      write_text_file(state_path, state.dump(2) + "\n");
    }

    RoundSummary summary;
    summary.round = round;
    summary.pool_size = pool.size();
    summary.mid_size = mid.size();
    summary.selected = selection.selected.size();
    summary.holdout_cof = report.aggregate.cof_rate();
    summary.holdout_ops = report.aggregate.ops();
    result.rounds.push_back(summary);
    result.rounds_completed = round;

    if (cfg.halt_after_round > 0 && round >= cfg.halt_after_round) {
      result.halted_early = round < cfg.iterations;
      break;
    }
  }
  return result;
}

}  // namespace dromql
