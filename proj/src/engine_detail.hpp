#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dromql/field_path.hpp"
#include "dromql/value.hpp"

namespace dromql::detail {

// Match-style path resolution: descends documents by key and arrays
// element-wise. Empty result means the path is missing.
void resolve_match(const Value& v, const std::vector<std::string>& segs, std::size_t idx,
                   std::vector<const Value*>& out);

inline std::vector<const Value*> resolve_match(const Value& doc, const FieldPath& path) {
  std::vector<const Value*> out;
  resolve_match(doc, path.segments(), 0, out);
  return out;
}

// Equality against a leaf, also matching any element of an array leaf.
bool leaf_eq(const Value& leaf, const Value& target);

// Case-folded variant for string targets.
bool leaf_eq_ci(const Value& leaf, const Value& target);

// Same-comparability-class ordering; nullopt when the kinds do not compare.
std::optional<int> compare_same_class(const Value& a, const Value& b);

// Inclusion projection of a set of paths, preserving source key order.
Value project_include(const Value& doc, const std::vector<FieldPath>& paths, bool keep_id);

// Creates intermediate documents as needed; overwrites non-documents.
void set_path(Value& doc, const FieldPath& path, Value v);

std::string ascii_lower(std::string_view s);

}  // namespace dromql::detail
