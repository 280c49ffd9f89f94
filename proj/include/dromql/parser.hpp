#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "dromql/ast.hpp"
#include "dromql/errors.hpp"
#include "dromql/value.hpp"

namespace dromql {

// Contents of the last fenced code block whose info string is
// "javascript", "js" or empty; the whole input, trimmed, when there is
// no such block.
std::string extract_code_block(std::string_view llm_output);

// Parses db.<collection>.aggregate([...]). Relaxed JSON: unquoted keys,
// single quotes, trailing commas, comments, ISODate()/ObjectId() wrappers
// and their {"$date":...}/{"$oid":...} equivalents. Throws SyntaxError.
Pipeline parse_pipeline(std::string_view text);

// Also accepts a bare stage array, attributed to default_collection.
Pipeline parse_pipeline(std::string_view text, const std::string& default_collection);

struct ParseResult {
  std::optional<Pipeline> pipeline;
  std::string error;       // set when pipeline is absent
  std::size_t offset = 0;  // byte offset of the failure
};

ParseResult try_parse_pipeline(std::string_view text);
ParseResult try_parse_pipeline(std::string_view text, const std::string& default_collection);

// A single relaxed-JSON value (used for JSONL rows, fixtures, synth output).
Value parse_value_text(std::string_view text);

}  // namespace dromql
