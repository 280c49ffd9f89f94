#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dromql/ast.hpp"
#include "dromql/database.hpp"
#include "dromql/embedding.hpp"
#include "dromql/executor.hpp"
#include "dromql/schema.hpp"

namespace dromql {

// Probe-verified evidence for one (field, value) mention in the draft.
// An empty verified list flags a mention not witnessed anywhere.
struct ValueEvidence {
  FieldPath mention_field;
  Value mention_value;
  std::vector<ProbeEvidence> verified;  // matched == true on every entry
};

struct ContextFlags {
  bool use_mschema = false;
  bool use_link = false;
  bool use_ground = false;

  int variant_index() const {
    return (use_mschema ? 1 : 0) | (use_link ? 2 : 0) | (use_ground ? 4 : 0);
  }
  static ContextFlags from_index(int i) {
    return ContextFlags{(i & 1) != 0, (i & 2) != 0, (i & 4) != 0};
  }
  friend bool operator==(const ContextFlags&, const ContextFlags&) = default;
};

struct EvidenceContext {
  std::string question;
  std::string schema_text;
  ContextFlags flags;
  std::vector<ValueEvidence> value_evidence;
  std::optional<Pipeline> draft;
  bool link_fallback = false;  // linking produced nothing; full schema used
};

struct LinkResult {
  std::set<FieldPath> fields;  // F0 union its top-k expansions
  SchemaTree pruned;
};

// Rule-extracted draft fields expanded through the vector index, then the
// schema projected onto the result.
LinkResult link_schema(const Pipeline& draft, const SchemaTree& schema, const FieldIndex& index,
                       int k, const Embedder& embedder);

// Probes equality/membership values from the draft against the collection;
// each candidate field comes from the mention's top-k expansion.
std::vector<ValueEvidence> ground_values(const Pipeline& draft, const Database& db,
                                         const std::string& collection, const FieldIndex& index,
                                         int k, const Embedder& embedder);

EvidenceContext assemble_context(const std::string& question, const SchemaTree& schema,
                                 const std::optional<Pipeline>& draft, ContextFlags flags,
                                 const Database& db, const FieldIndex& index, int k,
                                 const Embedder& embedder);

}  // namespace dromql
