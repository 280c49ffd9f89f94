#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dromql/json_bridge.hpp"
#include "dromql/orchestrator.hpp"
#include "dromql/parser.hpp"
#include "dromql/synthesis.hpp"

namespace {

using namespace dromql;

std::string read_input(const std::string& path) {
  if (path == "-") {
    std::stringstream buf;
    buf << std::cin.rdbuf();
    return buf.str();
  }
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
    return;
  }
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + out_path);
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
}

int fail_domain(const std::exception& e, const char* type) {
  nlohmann::ordered_json err;
  err["error"] = {{"type", type}, {"message", e.what()}};
  std::cerr << err.dump() << "\n";
  return 1;
}

nlohmann::ordered_json pipeline_to_json(const Pipeline& p) {
  nlohmann::ordered_json stages = nlohmann::ordered_json::array();
  for (const auto& st : p.stages) {
    nlohmann::ordered_json stage;
    stage["operator"] = st.op;
    stage["body"] = value_to_json(st.body);
    stage["supported"] = st.supported;
    stages.push_back(std::move(stage));
  }
  nlohmann::ordered_json j;
  j["collection"] = p.collection;
  j["stages"] = std::move(stages);
  j["canonical"] = render_pipeline(p);
  return j;
}

Pipeline parse_query_arg(const std::string& input, const std::string& collection) {
  if (collection.empty()) return parse_pipeline(input);
  return parse_pipeline(input, collection);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Draft-Refine-Optimize toolkit for NL-to-MongoDB-query research"};
  app.require_subcommand(1);

  std::string out_path;
  std::uint64_t seed = 7;
  int workers = 1;
  app.add_option("--out", out_path, "Write output here instead of stdout")->capture_default_str();
  app.add_option("--seed", seed, "Deterministic seed")->capture_default_str();
  app.add_option("--workers", workers, "Bounded worker count")->check(CLI::PositiveNumber);

  // parse
  auto* cmd_parse = app.add_subcommand("parse", "Parse pipeline text into a canonical AST");
  std::string parse_input = "-";
  std::string parse_collection;
  cmd_parse->add_option("input", parse_input, "File with pipeline text, or - for stdin");
  cmd_parse->add_option("--collection", parse_collection,
                        "Collection name for bare stage arrays");

  // exec
  auto* cmd_exec = app.add_subcommand("exec", "Execute a pipeline over a JSONL database");
  std::string exec_db, exec_input = "-", exec_collection;
  cmd_exec->add_option("--db", exec_db, "Directory of <collection>.jsonl files")->required();
  cmd_exec->add_option("input", exec_input, "File with pipeline text, or - for stdin");
  cmd_exec->add_option("--collection", exec_collection, "Collection for bare stage arrays");

  // link
  auto* cmd_link = app.add_subcommand("link", "Schema-link a draft pipeline");
  std::string link_db, link_draft = "-", link_annotations;
  int link_k = 5;
  cmd_link->add_option("--db", link_db, "Database directory")->required();
  cmd_link->add_option("draft", link_draft, "File with the draft pipeline, or - for stdin");
  cmd_link->add_option("-k", link_k, "Semantic expansion width")->check(CLI::PositiveNumber);
  cmd_link->add_option("--annotations", link_annotations, "Schema annotations sidecar");

  // ground
  auto* cmd_ground = app.add_subcommand("ground", "Probe-verify draft value mentions");
  std::string ground_db, ground_draft = "-", ground_annotations;
  int ground_k = 5;
  cmd_ground->add_option("--db", ground_db, "Database directory")->required();
  cmd_ground->add_option("draft", ground_draft, "File with the draft pipeline, or - for stdin");
  cmd_ground->add_option("-k", ground_k, "Semantic expansion width")->check(CLI::PositiveNumber);
  cmd_ground->add_option("--annotations", ground_annotations, "Schema annotations sidecar");

  // synth
  auto* cmd_synth = app.add_subcommand("synth", "Execution-guided data synthesis");
  std::string synth_db, synth_fixtures;
  int synth_target = 10;
  cmd_synth->add_option("--db", synth_db, "Database directory")->required();
  cmd_synth->add_option("--fixtures", synth_fixtures, "Mock generator fixture directory")
      ->required();
  cmd_synth->add_option("--target", synth_target, "Samples to keep")->check(CLI::PositiveNumber);

  // eval
  auto* cmd_eval = app.add_subcommand("eval", "Execution-based evaluation of a dataset");
  std::string eval_config;
  bool eval_mschema = false, eval_link = false, eval_ground = false, eval_holdout_only = false;
  cmd_eval->add_option("--config", eval_config, "Run config JSON")->required();
  cmd_eval->add_flag("--mschema", eval_mschema, "Use the M-Schema format");
  cmd_eval->add_flag("--link", eval_link, "Enable schema linking");
  cmd_eval->add_flag("--ground", eval_ground, "Enable value grounding");
  cmd_eval->add_flag("--holdout-only", eval_holdout_only, "Evaluate the held-out slice only");

  // dro
  auto* cmd_dro = app.add_subcommand("dro", "Run the Draft-Refine-Optimize loop");
  std::string dro_config;
  cmd_dro->add_option("--config", dro_config, "Run config JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (cmd_parse->parsed()) {
      const Pipeline p = parse_query_arg(read_input(parse_input), parse_collection);
      emit(out_path, pipeline_to_json(p).dump(2));
      return 0;
    }
    if (cmd_exec->parsed()) {
      const Database db = load_database_dir(exec_db);
      const Pipeline p = parse_query_arg(read_input(exec_input), exec_collection);
      const ExecOutcome outcome = execute(p, db);
      nlohmann::ordered_json j;
      j["status"] = outcome.status == ExecStatus::Ok            ? "ok"
                    : outcome.status == ExecStatus::RuntimeError ? "runtime_error"
                                                                 : "syntax_error";
      if (outcome.ok()) {
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        for (const auto& r : outcome.rows) rows.push_back(value_to_json(r));
        j["rows"] = std::move(rows);
      } else {
        j["error"] = outcome.error_message;
      }
      emit(out_path, j.dump(2));
      return outcome.ok() ? 0 : 1;
    }
    if (cmd_link->parsed() || cmd_ground->parsed()) {
      const bool linking = cmd_link->parsed();
      const std::string db_dir = linking ? link_db : ground_db;
      const std::string draft_path = linking ? link_draft : ground_draft;
      const std::string annotations = linking ? link_annotations : ground_annotations;
      const int k = linking ? link_k : ground_k;

      const Database db = load_database_dir(db_dir);
      const Pipeline draft = parse_pipeline(read_input(draft_path));
      if (!db.has_collection(draft.collection)) {
        throw UnknownCollectionError("unknown collection: " + draft.collection);
      }
      SchemaTree schema = infer_schema(db, draft.collection);
      if (!annotations.empty()) apply_annotations(schema, annotations);
      const TrigramEmbedder embedder(256);
      const FieldIndex index = FieldIndex::build(schema, embedder);

      if (linking) {
        const LinkResult link = link_schema(draft, schema, index, k, embedder);
        nlohmann::ordered_json fields = nlohmann::ordered_json::array();
        for (const auto& f : link.fields) fields.push_back(f.dotted());
        nlohmann::ordered_json j;
        j["collection"] = draft.collection;
        j["fields"] = std::move(fields);
        j["pruned_mschema"] = render_mschema(link.pruned);
        emit(out_path, j.dump(2));
      } else {
        const auto evidence = ground_values(draft, db, draft.collection, index, k, embedder);
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& ev : evidence) {
          nlohmann::ordered_json j;
          j["field"] = ev.mention_field.dotted();
          j["value"] = value_to_json(ev.mention_value);
          nlohmann::ordered_json verified = nlohmann::ordered_json::array();
          for (const auto& probe : ev.verified) {
            nlohmann::ordered_json pj;
            pj["field"] = probe.field.dotted();
            pj["case_insensitive"] = probe.case_insensitive;
            nlohmann::ordered_json sample = nlohmann::ordered_json::array();
            for (const auto& doc : probe.sample) sample.push_back(value_to_json(doc));
            pj["sample"] = std::move(sample);
            verified.push_back(std::move(pj));
          }
          j["verified"] = std::move(verified);
          j["witnessed"] = !ev.verified.empty();
          arr.push_back(std::move(j));
        }
        emit(out_path, arr.dump(2));
      }
      return 0;
    }
    if (cmd_synth->parsed()) {
      const Database db = load_database_dir(synth_db);
      MockGenerator generator(synth_fixtures);
      SynthConfig cfg;
      cfg.target_count = synth_target;
      Rng rng(seed);
      const SynthResult result = synthesize(db, generator, cfg, rng);
      std::string lines;
      for (const auto& s : result.samples) {
        nlohmann::ordered_json rec;
        rec["id"] = s.id;
        rec["question"] = s.nl;
        rec["mql_text"] = s.mql_text;
        rec["collection"] = s.collection;
        rec["complexity"] = s.complexity;
        rec["score"] = s.score;
        rec["source"] = "synth";
        lines += rec.dump() + "\n";
      }
      emit(out_path, lines);
      std::cerr << "kept " << result.samples.size() << " of " << result.intents_attempted
                << " intents" << (result.stalled ? " (stalled)" : "") << "\n";
      return result.stalled ? 1 : 0;
    }
    if (cmd_eval->parsed()) {
      RunConfig cfg = RunConfig::load(eval_config);
      if (workers > 1) cfg.workers = workers;
      const Workspace ws = Workspace::open(cfg);
      std::vector<InstanceRecord> instances = load_instances(cfg.dataset);
      if (eval_holdout_only && cfg.holdout_count > 0 &&
          static_cast<std::size_t>(cfg.holdout_count) < instances.size()) {
        instances.assign(instances.end() - cfg.holdout_count, instances.end());
      }
      const auto generator = make_generator(cfg.generator, load_instances(cfg.dataset));
      const ContextFlags flags{eval_mschema, eval_link, eval_ground};
      const EvalReport report = run_eval(ws, instances, *generator, flags, cfg.reward,
                                         cfg.generator.params, cfg.workers);
      std::string lines;
      for (const auto& r : report.rows) {
        nlohmann::ordered_json j;
        j["id"] = r.id;
        j["se"] = r.row.se;
        j["neo"] = r.row.neo;
        j["ro"] = r.row.ro;
        j["cof"] = r.row.cof;
        j["reward"] = r.reward.total;
        if (!r.error.empty()) j["error"] = r.error;
        lines += j.dump() + "\n";
      }
      emit(out_path, lines);
      std::cerr << format_eval_table(report);
      return 0;
    }
    if (cmd_dro->parsed()) {
      RunConfig cfg = RunConfig::load(dro_config);
      if (workers > 1) cfg.workers = workers;
      const DroResult result = run_dro(cfg);
      nlohmann::ordered_json j;
      j["rounds_completed"] = result.rounds_completed;
      j["baseline_cof"] = result.baseline_cof;
      nlohmann::ordered_json rounds = nlohmann::ordered_json::array();
      for (const auto& r : result.rounds) {
        rounds.push_back({{"round", r.round},
                          {"mid_size", r.mid_size},
                          {"selected", r.selected},
                          {"holdout_cof", r.holdout_cof},
                          {"holdout_ops", r.holdout_ops}});
      }
      j["rounds"] = std::move(rounds);
      emit(out_path, j.dump(2));
      return 0;
    }
  } catch (const SyntaxError& e) {
    return fail_domain(e, "syntax_error");
  } catch (const ConfigError& e) {
    nlohmann::ordered_json err;
    err["error"] = {{"type", "usage"}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return 2;
  } catch (const std::exception& e) {
    return fail_domain(e, "error");
  }
  return 2;
}
