#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dromql/database.hpp"
#include "dromql/field_path.hpp"
#include "dromql/value.hpp"

namespace dromql {

struct SchemaField {
  std::string name;
  std::set<Kind> kinds;               // observed value kinds at this node
  std::set<Kind> element_kinds;       // scalar kinds observed inside arrays
  bool array_of_documents = false;    // children describe array elements
  std::string description;
  std::vector<Value> examples;        // first max_examples distinct values
  std::vector<SchemaField> children;  // nested documents
  bool indexed = false;
  bool optional = false;  // absent from at least one document

  // Rendered type label, e.g. "int", "string[]", "int | string".
  std::string type_label() const;
};

struct SchemaTree {
  std::string collection;
  std::string description;
  std::vector<SchemaField> fields;
};

// Union of shapes over all documents; examples are the first max_examples
// distinct values in load order.
SchemaTree infer_schema(const Database& db, const std::string& collection,
                        int max_examples = 3);

// The universe of candidate dot-paths (intermediate nodes included).
std::vector<FieldPath> flatten(const SchemaTree& s);

const SchemaField* find_field(const SchemaTree& s, const FieldPath& path);

// Keeps exactly the fields of `keep` that exist, plus their ancestors.
SchemaTree prune(const SchemaTree& s, const std::set<FieldPath>& keep);

// TypeScript-interface style text.
std::string render_ts(const SchemaTree& s);

// Compact one-line-per-dot-path format with [IDX] markers.
std::string render_mschema(const SchemaTree& s);

// Sidecar annotations: JSON object mapping "collection" to a collection
// description and "collection.path" to {description, indexed}.
void apply_annotations(SchemaTree& s, const std::string& annotations_path);
void apply_annotations_text(SchemaTree& s, const std::string& json_text);

}  // namespace dromql
