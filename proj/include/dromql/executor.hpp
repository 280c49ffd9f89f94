#pragma once

#include <set>
#include <string>
#include <vector>

#include "dromql/ast.hpp"
#include "dromql/database.hpp"
#include "dromql/field_path.hpp"

namespace dromql {

enum class ExecStatus { SyntaxError, RuntimeError, Ok };

struct ExecOutcome {
  ExecStatus status = ExecStatus::RuntimeError;
  std::vector<Document> rows;  // meaningful only when status == Ok
  std::string error_message;

  bool ok() const { return status == ExecStatus::Ok; }

  static ExecOutcome make_ok(std::vector<Document> rows) {
    return ExecOutcome{ExecStatus::Ok, std::move(rows), ""};
  }
  static ExecOutcome make_syntax(std::string message) {
    return ExecOutcome{ExecStatus::SyntaxError, {}, std::move(message)};
  }
  static ExecOutcome make_runtime(std::string message) {
    return ExecOutcome{ExecStatus::RuntimeError, {}, std::move(message)};
  }
};

// Applies the stages left to right over the named collection. Unknown
// collections, unsupported stages/operators and type errors come back as
// runtime_error outcomes, never exceptions.
ExecOutcome execute(const Pipeline& p, const Database& db);

// Union over all rows of the leaf field paths; array elements contribute
// their paths without indices.
std::set<FieldPath> returned_field_set(const std::vector<Document>& rows);

// True when the surviving output order is pinned by a $sort.
bool result_is_ordered(const Pipeline& p);

struct ProbeEvidence {
  FieldPath field;
  Value value;
  bool matched = false;
  bool case_insensitive = false;  // matched only under the case-folded pass
  std::vector<Document> sample;   // up to 3 hits, projected to field + _id
};

// Tests whether the value occurs under the field (array-descending
// equality); strings get a secondary case-insensitive pass, flagged.
ProbeEvidence probe_match(const Database& db, const std::string& collection,
                          const FieldPath& field, const Value& value);

}  // namespace dromql
