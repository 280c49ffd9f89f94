#include "dromql/generator.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "dromql/parser.hpp"
#include "dromql/reward.hpp"

namespace dromql {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string replace_all(std::string text, std::string_view needle, std::string_view with) {
  std::size_t pos = 0;
  while ((pos = text.find(needle, pos)) != std::string::npos) {
    text.replace(pos, needle.size(), with);
    pos += with.size();
  }
  return text;
}

// Drops schema lines from the end until the prompt fits the budget.
BuiltPrompt fit_budget(const std::string& schema_text, const PromptBudget& budget,
                       const std::function<std::string(const std::string&)>& render) {
  BuiltPrompt out;
  out.text = render(schema_text);
  if (static_cast<int>(out.text.size()) <= budget.max_chars) return out;

  std::vector<std::string> lines;
  std::stringstream ss(schema_text);
  std::string line;
  while (std::getline(ss, line)) lines.push_back(line);
  while (lines.size() > 1) {
    lines.pop_back();
    std::string shrunk;
    for (const auto& l : lines) {
      shrunk += l;
      shrunk += '\n';
    }
    shrunk += "... (schema truncated)";
    out.text = render(shrunk);
    if (static_cast<int>(out.text.size()) <= budget.max_chars) {
      out.truncated = true;
      return out;
    }
  }
  out.truncated = true;
  return out;
}

}  // namespace

PromptTemplates PromptTemplates::load(const std::string& dir) {
  PromptTemplates t;
  t.draft = read_file(dir + "/draft_prompt.txt");
  t.refined = read_file(dir + "/refined_prompt.txt");
  t.format_instructions = read_file(dir + "/format_instructions.txt");
  return t;
}

BuiltPrompt build_draft_prompt(const std::string& question, const std::string& schema_text,
                               const PromptTemplates& templates, const PromptBudget& budget) {
  auto render = [&](const std::string& schema) {
    std::string text = templates.draft;
    text = replace_all(std::move(text), "{schema}", schema);
    text = replace_all(std::move(text), "{question}", question);
    text = replace_all(std::move(text), "{format_instructions}", templates.format_instructions);
    return text;
  };
  return fit_budget(schema_text, budget, render);
}

BuiltPrompt build_refined_prompt(const EvidenceContext& ctx, const PromptTemplates& templates,
                                 const PromptBudget& budget) {
  if (!ctx.flags.use_link && !ctx.flags.use_ground && !ctx.flags.use_mschema) {
    return build_draft_prompt(ctx.question, ctx.schema_text, templates, budget);
  }
  if (!ctx.flags.use_link && !ctx.flags.use_ground) {
    // mschema-only: the draft context with the alternate schema format
    return build_draft_prompt(ctx.question, ctx.schema_text, templates, budget);
  }

  std::string schema_note;
  if (ctx.flags.use_link) {
    schema_note = ctx.link_fallback ? " (full schema; draft linking found nothing)"
                                    : std::string(" ") + std::string(kPrunedSchemaMarker);
  }

  std::string draft_text =
      ctx.draft ? render_pipeline(*ctx.draft) : "(draft unavailable: it did not parse)";

  std::string evidence_section;
  if (ctx.flags.use_ground) {
    evidence_section = "### Value evidence\n";
    if (ctx.value_evidence.empty()) {
      evidence_section += "(no equality values to verify)\n";
    } else {
      for (const auto& ev : ctx.value_evidence) {
        if (ev.verified.empty()) {
          evidence_section += "- NOT FOUND anywhere in the data: " +
                              render_value(ev.mention_value) + " (draft filters " +
                              ev.mention_field.dotted() + " on it)\n";
          continue;
        }
        for (const auto& probe : ev.verified) {
          evidence_section += std::string(kVerifiedMarker) + probe.field.dotted() + " = " +
                              render_value(probe.value);
          if (probe.case_insensitive) evidence_section += " (stored casing differs)";
          if (!probe.sample.empty()) {
            evidence_section += "; e.g. " + render_value(probe.sample.front());
          }
          evidence_section += '\n';
        }
      }
    }
  }

  auto render = [&](const std::string& schema) {
    std::string text = templates.refined;
    text = replace_all(std::move(text), "{schema_note}", schema_note);
    text = replace_all(std::move(text), "{schema}", schema);
    text = replace_all(std::move(text), "{draft}", draft_text);
    text = replace_all(std::move(text), "{evidence_section}", evidence_section);
    text = replace_all(std::move(text), "{question}", ctx.question);
    text = replace_all(std::move(text), "{format_instructions}", templates.format_instructions);
    return text;
  };
  return fit_budget(ctx.schema_text, budget, render);
}

SplitResponse split_think(std::string_view raw) {
  SplitResponse out;
  std::size_t start = 0;
  while (start < raw.size() && std::isspace(static_cast<unsigned char>(raw[start]))) ++start;
  constexpr std::string_view open = "<think>";
  constexpr std::string_view close = "</think>";
  if (raw.substr(start, open.size()) != open) {
    out.rest = std::string(raw);
    return out;
  }
  const std::size_t body = start + open.size();
  const std::size_t end = raw.find(close, body);
  if (end == std::string_view::npos) {
    // Unclosed reasoning: nothing after it to parse.
    out.reasoning = std::string(raw.substr(body));
    out.rest = "";
    return out;
  }
  out.reasoning = std::string(raw.substr(body, end - body));
  out.rest = std::string(raw.substr(end + close.size()));
  return out;
}

Pipeline parse_response(std::string_view raw) {
  const SplitResponse split = split_think(raw);
  const std::string block = extract_code_block(split.rest);
  return parse_pipeline(block);
}

// ---------------------------------------------------------------------------

std::string prompt_fixture_key(const GenRequest& req) {
  const std::uint64_t h = hash_text(req.system + "\x1e" + req.user);
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

MockGenerator::MockGenerator(std::string fixture_dir) : dir_(std::move(fixture_dir)) {}

GenResponse MockGenerator::generate(const GenRequest& req) {
  const std::string key = prompt_fixture_key(req);
  std::lock_guard<std::mutex> lock(mu_);
  auto it = cache_.find(key);
  if (it == cache_.end()) {
    const std::string path = dir_ + "/" + key + ".json";
    if (!std::filesystem::exists(path)) {
      throw MockExhaustedError("no fixture for prompt hash " + key);
    }
    const auto arr = nlohmann::json::parse(read_file(path));
    if (!arr.is_array() || arr.empty()) {
      throw MockExhaustedError("fixture " + key + " is not a non-empty array");
    }
    std::vector<std::string> responses;
    for (const auto& r : arr) responses.push_back(r.get<std::string>());
    it = cache_.emplace(key, std::move(responses)).first;
  }
  const auto& responses = it->second;
  std::size_t& used = consumed_[key];
  if (responses.size() == 1) {
    ++used;
    return GenResponse{responses.front(), {}, 0, count_tokens(responses.front())};
  }
  if (used >= responses.size()) {
    throw MockExhaustedError("fixture exhausted for prompt hash " + key);
  }
  const std::string& text = responses[used++];
  return GenResponse{text, {}, 0, count_tokens(text)};
}

GenResponse RecordingGenerator::generate(const GenRequest& req) {
  GenResponse resp = inner_.generate(req);
  std::lock_guard<std::mutex> lock(mu_);
  recorded_[prompt_fixture_key(req)].push_back(resp.text);
  return resp;
}

void RecordingGenerator::write_fixtures(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  for (const auto& [key, responses] : recorded_) {
    bool all_same = true;
    for (const auto& r : responses) all_same = all_same && r == responses.front();
    nlohmann::json arr = nlohmann::json::array();
    if (all_same) {
      arr.push_back(responses.front());
    } else {
      for (const auto& r : responses) arr.push_back(r);
    }
    std::ofstream out(dir + "/" + key + ".json", std::ios::trunc);
    if (!out) throw IoError("cannot write fixture " + key);
    out << arr.dump(2) << '\n';
  }
}

}  // namespace dromql

// httplib pulls in a lot; keep it isolated to this translation unit.
#include <httplib.h>

namespace dromql {

GenResponse HttpGenerator::generate(const GenRequest& req) {
  req.params.validate();
  nlohmann::json body;
  body["model"] = cfg_.model;
  body["messages"] = nlohmann::json::array();
  if (!req.system.empty()) {
    body["messages"].push_back({{"role", "system"}, {"content", req.system}});
  }
  body["messages"].push_back({{"role", "user"}, {"content", req.user}});
  body["temperature"] = req.params.temperature;
  body["top_p"] = req.params.top_p;
  body["max_tokens"] = req.params.max_tokens;
  if (req.want_logprobs) body["logprobs"] = true;

  std::string last_error;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(cfg_.backoff_ms << (attempt - 1)));
    }
    httplib::Client client(cfg_.base_url);
    client.set_connection_timeout(cfg_.timeout_seconds);
    client.set_read_timeout(cfg_.timeout_seconds);
    httplib::Headers headers;
    if (const char* key = std::getenv(cfg_.api_key_env.c_str())) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    auto res = client.Post(cfg_.path, headers, body.dump(), "application/json");
    if (!res) {
      last_error = "connection failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "transient HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw EndpointError("HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    try {
      const auto json = nlohmann::json::parse(res->body);
      const auto& choice = json.at("choices").at(0);
      GenResponse out;
      out.text = choice.at("message").at("content").get<std::string>();
      if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
          choice["logprobs"].contains("content")) {
        for (const auto& tok : choice["logprobs"]["content"]) {
          out.logprobs.push_back(TokenLogprob{tok.value("token", ""),
                                              tok.value("logprob", 0.0)});
        }
      }
      if (json.contains("usage")) {
        out.prompt_tokens = json["usage"].value("prompt_tokens", 0);
        out.completion_tokens = json["usage"].value("completion_tokens", 0);
      }
      return out;
    } catch (const nlohmann::json::exception& e) {
      throw EndpointError(std::string("malformed endpoint response: ") + e.what());
    }
  }
  throw EndpointError("endpoint unavailable after " + std::to_string(cfg_.max_retries + 1) +
                      " attempts: " + last_error);
}

// ---------------------------------------------------------------------------

namespace {

Value degrade_value(const Value& v);

Value degrade_match(const Value& cond) {
  if (!cond.is_document()) return cond;
  Value::Document out;
  for (const auto& e : cond.as_document()) {
    std::string key = e.key;
    if (!key.empty() && key[0] != '$') {
      const std::size_t dot = key.rfind('.');
      if (dot != std::string::npos) key = key.substr(dot + 1);  // cut to last segment
    }
    Value val = e.value;
    if (!e.key.empty() && e.key[0] == '$' && val.is_array() &&
        (e.key == "$and" || e.key == "$or" || e.key == "$nor")) {
      Value::Array arr;
      for (const auto& sub : val.as_array()) arr.push_back(degrade_match(sub));
      val = Value(std::move(arr));
    } else {
      val = degrade_value(val);
    }
    out.push_back(Value::Entry{std::move(key), std::move(val)});
  }
  return Value(std::move(out));
}

Value degrade_value(const Value& v) {
  if (v.is_string()) {
    std::string s = v.as_string();
    for (char& c : s) {
      if (std::isalpha(static_cast<unsigned char>(c))) {
        c = std::isupper(static_cast<unsigned char>(c))
                ? static_cast<char>(std::tolower(static_cast<unsigned char>(c)))
                : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        break;  // mangle the first letter only
      }
    }
    return Value(std::move(s));
  }
  if (v.is_document()) {
    Value::Document out;
    for (const auto& e : v.as_document()) {
      Value val = degrade_value(e.value);
      if ((e.key == "$gt" || e.key == "$gte" || e.key == "$lt" || e.key == "$lte") &&
          val.is_numeric()) {
        val = val.is_int() ? Value(val.as_int() * 1000) : Value(val.as_float() * 1000.0);
      }
      out.push_back(Value::Entry{e.key, std::move(val)});
    }
    return Value(std::move(out));
  }
  if (v.is_array()) {
    Value::Array out;
    for (const auto& e : v.as_array()) out.push_back(degrade_value(e));
    return Value(std::move(out));
  }
  return v;
}

std::string shorten_dotted(const std::string& s) {
  const std::size_t dot = s.rfind('.');
  return dot == std::string::npos ? s : s.substr(dot + 1);
}

Value degrade_paths_in_body(const Value& v) {
  if (v.is_string()) {
    const std::string& s = v.as_string();
    if (s.size() > 1 && s[0] == '$' && s[1] != '$') {
      return Value("$" + shorten_dotted(s.substr(1)));
    }
    return v;
  }
  if (v.is_document()) {
    Value::Document out;
    for (const auto& e : v.as_document()) {
      std::string key = e.key;
      if (!key.empty() && key[0] != '$') key = shorten_dotted(key);
      out.push_back(Value::Entry{std::move(key), degrade_paths_in_body(e.value)});
    }
    return Value(std::move(out));
  }
  if (v.is_array()) {
    Value::Array out;
    for (const auto& e : v.as_array()) out.push_back(degrade_paths_in_body(e));
    return Value(std::move(out));
  }
  return v;
}

}  // namespace

Pipeline StubGenerator::degrade(const Pipeline& reference) {
  Pipeline out;
  out.collection = reference.collection;
  for (const auto& st : reference.stages) {
    Stage copy = st;
    if (st.op == "$match") {
      copy.body = degrade_match(st.body);
    } else {
      copy.body = degrade_paths_in_body(st.body);
    }
    out.stages.push_back(std::move(copy));
  }
  return out;
}

GenResponse StubGenerator::generate(const GenRequest& req) {
  const InstanceRecord* hit = nullptr;
  for (const auto& inst : instances_) {
    if (req.user.find(inst.question) == std::string::npos) continue;
    if (hit == nullptr || inst.question.size() > hit->question.size()) hit = &inst;
  }
  GenResponse out;
  if (hit == nullptr) {
    out.text = "I cannot find the relevant collection for this request.";
    out.completion_tokens = count_tokens(out.text);
    return out;
  }
  const bool refined = req.user.find(kVerifiedMarker) != std::string::npos ||
                       req.user.find(kPrunedSchemaMarker) != std::string::npos;
  const Pipeline answer = refined ? hit->reference : degrade(hit->reference);
  out.text = "<think>Matching the question against the schema and evidence.</think>\n"
             "```javascript\n" +
             render_pipeline(answer) + "\n```";
  out.completion_tokens = count_tokens(out.text);
  return out;
}

}  // namespace dromql
