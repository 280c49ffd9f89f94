#include "dromql/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "dromql/metrics.hpp"
#include "dromql/parser.hpp"
#include "dromql/schema.hpp"

namespace dromql {

std::string_view complexity_name(ComplexityLevel level) {
  switch (level) {
    case ComplexityLevel::Simple: return "Simple";
    case ComplexityLevel::Moderate: return "Moderate";
    case ComplexityLevel::Complex: return "Complex";
  }
  return "?";
}

void SynthConfig::validate() const {
  mix.validate();
  double wsum = 0;
  for (double w : weights) wsum += w;
  if (std::abs(wsum - 1.0) > 1e-9) throw ConfigError("quality weights must sum to 1");
  if (!(threshold > 0 && threshold <= 1)) throw ConfigError("threshold must be in (0, 1]");
  if (candidates_min < 1 || candidates_max < candidates_min) {
    throw ConfigError("need 1 <= candidates_min <= candidates_max");
  }
  if (target_count < 0 || sample_budget < 1) throw ConfigError("bad synth counts");
}

namespace {

struct LeafScan {
  std::vector<std::pair<FieldPath, Value>> leaves;
};

void scan_leaves(const Value& v, const FieldPath& prefix, LeafScan& out) {
  if (v.is_document()) {
    for (const auto& e : v.as_document()) scan_leaves(e.value, prefix.child(e.key), out);
    return;
  }
  if (v.is_array()) {
    for (const auto& e : v.as_array()) {
      if (e.is_document() || e.is_array()) {
        scan_leaves(e, prefix, out);
      } else if (!prefix.empty()) {
        out.leaves.emplace_back(prefix, e);
      }
    }
    return;
  }
  if (!prefix.empty()) out.leaves.emplace_back(prefix, v);
}

}  // namespace

std::vector<Document> sample_representative(const Database& db, const std::string& collection,
                                            int budget, const SamplingMix& mix, Rng& rng) {
  mix.validate();
  const auto& rows = db.collection(collection);
  if (rows.empty()) throw EmptyCollectionError("collection is empty: " + collection);
  if (budget < 1) throw ConfigError("sample budget must be at least 1");

  const int n_random = static_cast<int>(std::floor(mix.random_frac * budget));
  const int n_strat = static_cast<int>(std::floor(mix.stratified_frac * budget));
  const int n_rare = budget - n_random - n_strat;

  std::vector<Document> out;
  auto take_uniform = [&](int count) {
    if (count <= 0) return;
    if (static_cast<std::size_t>(count) <= rows.size()) {
      for (std::size_t i : sample_indices(rows.size(), static_cast<std::size_t>(count), rng)) {
        out.push_back(rows[i]);
      }
    } else {
      for (int i = 0; i < count; ++i) out.push_back(rows[rng.below(rows.size())]);
    }
  };
  take_uniform(n_random);

  // Stratify over the lowest-cardinality string field.
  std::map<FieldPath, std::map<std::string, std::vector<std::size_t>>> strata;
  std::map<FieldPath, std::map<std::string, std::pair<std::size_t, std::size_t>>> extremes;
  std::map<FieldPath, std::pair<std::pair<double, std::size_t>, std::pair<double, std::size_t>>>
      numeric_extremes;  // path -> ((min, doc), (max, doc))
  for (std::size_t i = 0; i < rows.size(); ++i) {
    LeafScan scan;
    scan_leaves(rows[i], FieldPath{}, scan);
    std::set<FieldPath> seen_here;
    for (const auto& [path, value] : scan.leaves) {
      if (value.is_string() && seen_here.insert(path).second) {
        strata[path][value.as_string()].push_back(i);
      }
      if (value.is_numeric()) {
        const double x = value.numeric();
        auto it = numeric_extremes.find(path);
        if (it == numeric_extremes.end()) {
          numeric_extremes[path] = {{x, i}, {x, i}};
        } else {
          if (x < it->second.first.first) it->second.first = {x, i};
          if (x > it->second.second.first) it->second.second = {x, i};
        }
      }
    }
  }

  if (n_strat > 0) {
    const std::map<std::string, std::vector<std::size_t>>* best = nullptr;
    for (const auto& [path, groups] : strata) {  // map order = lexicographic tie-break
      if (best == nullptr || groups.size() < best->size()) best = &groups;
    }
    if (best == nullptr) {
      take_uniform(n_strat);
    } else {
      std::vector<const std::vector<std::size_t>*> buckets;
      for (const auto& [value, docs] : *best) buckets.push_back(&docs);
      std::vector<std::size_t> cursor(buckets.size(), 0);
      int taken = 0;
      std::size_t b = 0, idle = 0;
      while (taken < n_strat && idle < buckets.size()) {
        auto& cur = cursor[b % buckets.size()];
        const auto& bucket = *buckets[b % buckets.size()];
        if (cur < bucket.size()) {
          out.push_back(rows[bucket[cur++]]);
          ++taken;
          idle = 0;
        } else {
          ++idle;
        }
        ++b;
      }
      while (taken < n_strat) {  // strata exhausted; wrap around
        const auto& bucket = *buckets[static_cast<std::size_t>(taken) % buckets.size()];
        out.push_back(rows[bucket[static_cast<std::size_t>(taken / buckets.size()) %
                                  bucket.size()]]);
        ++taken;
      }
    }
  }

  if (n_rare > 0) {
    std::vector<std::size_t> holders;
    for (const auto& [path, mm] : numeric_extremes) {
      holders.push_back(mm.first.second);
      holders.push_back(mm.second.second);
    }
    if (holders.empty()) {
      take_uniform(n_rare);
    } else {
      for (int i = 0; i < n_rare; ++i) {
        out.push_back(rows[holders[static_cast<std::size_t>(i) % holders.size()]]);
      }
    }
  }
  return out;
}

ComplexityLevel pick_complexity(const std::array<int, 3>& produced,
                                const ComplexityTargets& targets) {
  const int total = produced[0] + produced[1] + produced[2];
  const std::array<double, 3> fracs = {targets.simple, targets.moderate, targets.complex_frac};
  // Deficit toward the next pick; ties keep the Simple < Moderate < Complex order.
  int best = 0;
  double best_deficit = -1e18;
  for (int i = 0; i < 3; ++i) {
    const double deficit = fracs[static_cast<std::size_t>(i)] * (total + 1) -
                           produced[static_cast<std::size_t>(i)];
    if (deficit > best_deficit + 1e-12) {
      best_deficit = deficit;
      best = i;
    }
  }
  return static_cast<ComplexityLevel>(best);
}

SynthCandidate parse_synth_candidate(std::string_view raw, const std::string& collection) {
  SynthCandidate cand;
  const SplitResponse split = split_think(raw);
  cand.reasoning = split.reasoning;

  // Last fenced block of any data-ish flavor, else the raw remainder.
  std::string body = extract_code_block(split.rest);
  try {
    const Value obj = parse_value_text(body);
    if (obj.is_document()) {
      if (const Value* nl = obj.find("nl")) {
        if (nl->is_string()) cand.nl = nl->as_string();
      }
      if (const Value* q = obj.find("question")) {
        if (cand.nl.empty() && q->is_string()) cand.nl = q->as_string();
      }
      if (const Value* mql = obj.find("mql")) {
        if (mql->is_string()) cand.mql_text = mql->as_string();
      }
    }
  } catch (const SyntaxError&) {
    return cand;  // nothing parsed; all indicators stay false
  }
  if (cand.mql_text.empty()) return cand;
  const ParseResult parsed = try_parse_pipeline(cand.mql_text, collection);
  if (parsed.pipeline) {
    cand.mql = parsed.pipeline;
    cand.indicators.syn = true;
  }
  return cand;
}

namespace {

void collect_scalar_mentions(const Value& v, std::vector<std::string>& out) {
  switch (v.kind()) {
    case Kind::Int: out.push_back(std::to_string(v.as_int())); break;
    case Kind::Float: {
      std::string s = render_value(v);
      if (s.size() > 2 && s.substr(s.size() - 2) == ".0") s.resize(s.size() - 2);
      out.push_back(std::move(s));
      break;
    }
    case Kind::String: out.push_back(v.as_string()); break;
    case Kind::Bool: out.push_back(v.as_bool() ? "true" : "false"); break;
    case Kind::Array:
      for (const auto& e : v.as_array()) collect_scalar_mentions(e, out);
      break;
    default: break;  // null/date/objectid are not NL-checkable
  }
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

int word_count(std::string_view s) {
  int n = 0;
  bool in = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in = false;
    } else if (!in) {
      in = true;
      ++n;
    }
  }
  return n;
}

}  // namespace

double quality_score(SynthCandidate& candidate, const ExecOutcome& exec_outcome,
                     const SynthConfig& cfg) {
  auto& ind = candidate.indicators;
  ind.exec = ind.syn && exec_outcome.ok();
  ind.valid = ind.exec && rows_reasonable(exec_outcome.rows);

  ind.consist = false;
  if (!candidate.nl.empty() && candidate.mql.has_value() && word_count(candidate.nl) >= 5) {
    const std::string nl = lower(candidate.nl);
    bool all_mentioned = true;
    std::vector<std::string> mentions;
    for (const auto& pred : extract_value_predicates(*candidate.mql)) {
      if (pred.op == PredOp::Exists || pred.op == PredOp::Regex ||
          pred.op == PredOp::ElemMatch) {
        continue;
      }
      collect_scalar_mentions(pred.value, mentions);
    }
    for (const auto& m : mentions) {
      if (nl.find(lower(m)) == std::string::npos) {
        all_mentioned = false;
        break;
      }
    }
    ind.consist = all_mentioned;
  }

  candidate.score = cfg.weights[0] * ind.syn + cfg.weights[1] * ind.exec +
                    cfg.weights[2] * ind.valid + cfg.weights[3] * ind.consist;
  return candidate.score;
}

std::string build_synth_prompt(const std::string& schema_text,
                               const std::vector<Document>& sample_docs,
                               ComplexityLevel level, const std::string& collection) {
  std::string prompt =
      "Propose one new analytics question and the MongoDB aggregation pipeline that answers "
      "it.\n\n### Collection\n" +
      collection + "\n\n### Schema\n" + schema_text + "\n### Representative documents\n";
  for (const auto& doc : sample_docs) {
    prompt += render_value(doc);
    prompt += '\n';
  }
  prompt += "\n### Required complexity\n";
  prompt += complexity_name(level);
  switch (level) {
    case ComplexityLevel::Simple:
      prompt += " - a single-field lookup.\n";
      break;
    case ComplexityLevel::Moderate:
      prompt += " - multiple conditions combined with logical operators.\n";
      break;
    case ComplexityLevel::Complex:
      prompt += " - a multi-stage aggregation pipeline.\n";
      break;
  }
  prompt +=
      "\nThink inside <think> tags, then output one JSON object with keys \"nl\" (the "
      "question, mentioning every literal value the query filters on) and \"mql\" (the "
      "pipeline as db." +
      collection + ".aggregate([...])) inside a ```json code block.\n";
  return prompt;
}

SynthResult synthesize(const Database& db, Generator& generator, const SynthConfig& cfg,
                       Rng& rng) {
  cfg.validate();
  SynthResult result;

  std::vector<std::string> collections;
  for (const auto& name : db.collection_names()) {
    if (!db.collection(name).empty()) collections.push_back(name);
  }
  if (collections.empty()) throw EmptyCollectionError("database has no non-empty collections");

  // Schema and representative documents are built once, up front.
  std::map<std::string, std::string> schema_texts;
  std::map<std::string, std::vector<Document>> rep_docs;
  for (const auto& name : collections) {
    schema_texts[name] = render_mschema(infer_schema(db, name));
    rep_docs[name] = sample_representative(db, name, cfg.sample_budget, cfg.mix, rng);
  }

  std::array<int, 3> produced = {0, 0, 0};
  int stalled_intents = 0;
  int kept = 0;
  while (kept < cfg.target_count) {
    ++result.intents_attempted;
    const std::string& collection = collections[rng.below(collections.size())];
    const ComplexityLevel level = pick_complexity(produced, cfg.targets);
    const std::string prompt =
        build_synth_prompt(schema_texts[collection], rep_docs[collection], level, collection);

    const int n_candidates =
        static_cast<int>(rng.range(cfg.candidates_min, cfg.candidates_max));
    SynthCandidate best;
    bool have_best = false;
    for (int k = 0; k < n_candidates; ++k) {
      GenRequest req;
      req.user = prompt;
      const GenResponse resp = generator.generate(req);
      SynthCandidate cand = parse_synth_candidate(resp.text, collection);
      ExecOutcome outcome = ExecOutcome::make_syntax("not parsed");
      if (cand.mql) outcome = execute(*cand.mql, db);
      quality_score(cand, outcome, cfg);
      if (!have_best || cand.score > best.score) {
        best = std::move(cand);
        have_best = true;
      }
    }
    if (have_best && best.score >= cfg.threshold && best.mql) {
      SynthSample sample;
      sample.id = "synth-" + std::to_string(result.samples.size() + 1);
      sample.nl = best.nl;
      sample.mql_text = render_pipeline(*best.mql);
      sample.collection = best.mql->collection;
      sample.complexity = std::string(complexity_name(level));
      sample.score = best.score;
      sample.reasoning = best.reasoning;
      result.samples.push_back(std::move(sample));
      ++produced[static_cast<std::size_t>(level)];
      ++kept;
      stalled_intents = 0;
    } else {
      ++stalled_intents;
      if (stalled_intents >= cfg.max_stalled_intents) {
        result.stalled = true;
        break;
      }
    }
  }
  result.samples = dedupe_clean(std::move(result.samples));
  return result;
}

std::vector<SynthSample> dedupe_clean(std::vector<SynthSample> samples) {
  std::vector<SynthSample> out;
  std::set<std::string> seen;
  for (auto& s : samples) {
    std::string norm;
    for (char c : s.nl) {
      if (std::isalnum(static_cast<unsigned char>(c)) ||
          std::isspace(static_cast<unsigned char>(c))) {
        norm += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      }
    }
    // collapse whitespace
    std::string squeezed;
    bool space = false;
    for (char c : norm) {
      if (std::isspace(static_cast<unsigned char>(c))) {
        space = true;
      } else {
        if (space && !squeezed.empty()) squeezed += ' ';
        space = false;
        squeezed += c;
      }
    }
    const std::string key = squeezed + "\x1f" + s.mql_text;
    if (seen.insert(key).second) out.push_back(std::move(s));
  }
  return out;
}

void write_synth_jsonl(const std::string& path, const std::vector<SynthSample>& samples) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& s : samples) {
    nlohmann::ordered_json rec;
    rec["id"] = s.id;
    rec["question"] = s.nl;
    rec["mql_text"] = s.mql_text;
    rec["collection"] = s.collection;
    rec["complexity"] = s.complexity;
    rec["score"] = s.score;
    rec["source"] = "synth";
    if (!s.reasoning.empty()) rec["reasoning"] = s.reasoning;
    out << rec.dump() << '\n';
  }
}

}  // namespace dromql
