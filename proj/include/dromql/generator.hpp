#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "dromql/ast.hpp"
#include "dromql/curriculum.hpp"
#include "dromql/errors.hpp"
#include "dromql/evidence.hpp"

namespace dromql {

struct SamplingParams {
  double temperature = 0.7;
  double top_p = 0.95;
  int max_tokens = 4096;

  void validate() const {
    if (temperature < 0) throw ConfigError("temperature must be non-negative");
    if (!(top_p > 0 && top_p <= 1)) throw ConfigError("top_p must be in (0, 1]");
  }
};

struct GenRequest {
  std::string system;
  std::string user;
  SamplingParams params;
  bool want_logprobs = false;
};

struct TokenLogprob {
  std::string token;
  double logprob = 0;
};

struct GenResponse {
  std::string text;
  std::vector<TokenLogprob> logprobs;  // present only when the endpoint supplies them
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

class Generator {
 public:
  virtual ~Generator() = default;
  virtual GenResponse generate(const GenRequest& req) = 0;
};

// ---------------------------------------------------------------------------
// Prompt construction

struct PromptTemplates {
  std::string draft;    // {schema} {question} {format_instructions}
  std::string refined;  // + {schema_note} {draft} {evidence_section}
  std::string format_instructions;

  static PromptTemplates load(const std::string& dir);
};

struct PromptBudget {
  int max_chars = 24000;
};

struct BuiltPrompt {
  std::string text;
  bool truncated = false;
};

BuiltPrompt build_draft_prompt(const std::string& question, const std::string& schema_text,
                               const PromptTemplates& templates, const PromptBudget& budget = {});

// Identical to the draft prompt when every flag is off; otherwise includes
// the draft under revision and, with use_ground, the value-evidence section.
BuiltPrompt build_refined_prompt(const EvidenceContext& ctx, const PromptTemplates& templates,
                                 const PromptBudget& budget = {});

// Marker the refined prompt carries when the schema was pruned.
inline constexpr std::string_view kPrunedSchemaMarker = "(pruned to draft-relevant fields)";
// Marker prefix of verified evidence lines.
inline constexpr std::string_view kVerifiedMarker = "- VERIFIED ";

// ---------------------------------------------------------------------------
// Response parsing

struct SplitResponse {
  std::string reasoning;  // inner text of a leading <think> block
  std::string rest;
};

SplitResponse split_think(std::string_view raw);

// strip <think> prefix, take the last fenced code block, parse. Throws
// SyntaxError on failure (the -1.0 reward branch).
Pipeline parse_response(std::string_view raw);

// ---------------------------------------------------------------------------
// Mock generator: fixture replay keyed by prompt hash

std::string prompt_fixture_key(const GenRequest& req);

// Fixture layout: <dir>/<key>.json holding a JSON array of response
// strings, consumed in order. A single-element array replays forever; a
// longer array throws MockExhaustedError once spent.
class MockGenerator : public Generator {
 public:
  explicit MockGenerator(std::string fixture_dir);
  GenResponse generate(const GenRequest& req) override;

 private:
  std::string dir_;
  std::mutex mu_;
  std::map<std::string, std::size_t> consumed_;
  std::map<std::string, std::vector<std::string>> cache_;
};

// Wraps another generator and records every exchange; write_fixtures()
// emits MockGenerator-compatible files (identical responses collapse to a
// single replayed entry).
class RecordingGenerator : public Generator {
 public:
  explicit RecordingGenerator(Generator& inner) : inner_(inner) {}
  GenResponse generate(const GenRequest& req) override;
  void write_fixtures(const std::string& dir) const;

 private:
  Generator& inner_;
  std::mutex mu_;
  std::map<std::string, std::vector<std::string>> recorded_;
};

// ---------------------------------------------------------------------------
// Live chat-completion client

struct HttpGeneratorConfig {
  std::string base_url;  // e.g. http://localhost:8000
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string api_key_env = "DROMQL_API_KEY";
  int timeout_seconds = 60;
  int max_retries = 3;
  int backoff_ms = 250;
};

class HttpGenerator : public Generator {
 public:
  explicit HttpGenerator(HttpGeneratorConfig cfg) : cfg_(std::move(cfg)) {}
  GenResponse generate(const GenRequest& req) override;

 private:
  HttpGeneratorConfig cfg_;
};

// ---------------------------------------------------------------------------
// Deterministic rule-based responder for offline runs. Answers with the
// instance's reference pipeline when the prompt carries refinement markers
// (verified evidence or a pruned schema); otherwise emits a mechanically
// degraded draft: nested paths cut to their last segment, string equality
// values case-mangled, range endpoints scaled.
class StubGenerator : public Generator {
 public:
  explicit StubGenerator(std::vector<InstanceRecord> instances)
      : instances_(std::move(instances)) {}
  GenResponse generate(const GenRequest& req) override;

  static Pipeline degrade(const Pipeline& reference);

 private:
  std::vector<InstanceRecord> instances_;
};

}  // namespace dromql
