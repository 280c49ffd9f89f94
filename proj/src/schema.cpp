#include "dromql/schema.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace dromql {

namespace {

SchemaField* find_or_add_child(std::vector<SchemaField>& children, const std::string& name) {
  for (auto& c : children) {
    if (c.name == name) return &c;
  }
  children.push_back(SchemaField{});
  children.back().name = name;
  return &children.back();
}

void add_example(SchemaField& f, const Value& v, int max_examples) {
  if (static_cast<int>(f.examples.size()) >= max_examples) return;
  for (const auto& e : f.examples) {
    if (e == v) return;
  }
  f.examples.push_back(v);
}

void observe(SchemaField& field, const Value& v, int max_examples) {
  switch (v.kind()) {
    case Kind::Document:
      field.kinds.insert(Kind::Document);
      for (const auto& e : v.as_document()) {
        SchemaField* child = find_or_add_child(field.children, e.key);
        observe(*child, e.value, max_examples);
      }
      return;
    case Kind::Array: {
      field.kinds.insert(Kind::Array);
      for (const auto& elem : v.as_array()) {
        if (elem.is_document()) {
          field.array_of_documents = true;
          for (const auto& e : elem.as_document()) {
            SchemaField* child = find_or_add_child(field.children, e.key);
            observe(*child, e.value, max_examples);
          }
        } else if (!elem.is_array()) {
          field.element_kinds.insert(elem.kind());
        }
      }
      if (!field.array_of_documents) add_example(field, v, max_examples);
      return;
    }
    default:
      field.kinds.insert(v.kind());
      add_example(field, v, max_examples);
      return;
  }
}

}  // namespace

std::string SchemaField::type_label() const {
  std::vector<std::string> parts;
  for (Kind k : kinds) {
    if (k == Kind::Array) {
      if (array_of_documents) {
        parts.push_back("document[]");
      } else if (element_kinds.empty()) {
        parts.push_back("array");
      } else {
        std::string inner;
        for (Kind ek : element_kinds) {
          if (!inner.empty()) inner += " | ";
          inner += std::string(kind_name(ek));
        }
        parts.push_back(element_kinds.size() > 1 ? "(" + inner + ")[]" : inner + "[]");
      }
    } else {
      parts.push_back(std::string(kind_name(k)));
    }
  }
  if (parts.empty()) return "unknown";
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += " | ";
    out += p;
  }
  return out;
}

SchemaTree infer_schema(const Database& db, const std::string& collection, int max_examples) {
  const auto& rows = db.collection(collection);
  SchemaTree tree;
  tree.collection = collection;

  SchemaField root;
  for (const auto& doc : rows) observe(root, doc, max_examples);
  tree.fields = std::move(root.children);

  // A field is optional when some document at its parent level lacks it.
  struct Count {
    SchemaField* field;
    std::size_t present = 0;
    std::size_t parent_total = 0;
  };
  std::vector<Count> counts;
  auto index_fields = [&](auto&& self, std::vector<SchemaField>& fields) -> void {
    for (auto& f : fields) {
      counts.push_back(Count{&f, 0, 0});
      self(self, f.children);
    }
  };
  index_fields(index_fields, tree.fields);

  auto count_for = [&](SchemaField* f) -> Count& {
    for (auto& c : counts) {
      if (c.field == f) return c;
    }
    return counts.front();
  };

  auto tally = [&](auto&& self, std::vector<SchemaField>& fields, const Value& value) -> void {
    if (!value.is_document()) return;
    for (auto& f : fields) {
      Count& c = count_for(&f);
      ++c.parent_total;
      const Value* v = value.find(f.name);
      if (v == nullptr) continue;
      ++c.present;
      if (v->is_document()) {
        self(self, f.children, *v);
      } else if (v->is_array()) {
        for (const auto& elem : v->as_array()) self(self, f.children, elem);
      }
    }
  };
  for (const auto& doc : rows) tally(tally, tree.fields, doc);
  for (auto& c : counts) c.field->optional = c.present < c.parent_total;
  return tree;
}

namespace {

void flatten_into(const std::vector<SchemaField>& fields, const FieldPath& prefix,
                  std::vector<FieldPath>& out) {
  for (const auto& f : fields) {
    const FieldPath path = prefix.empty() ? *FieldPath::parse(f.name) : prefix.child(f.name);
    out.push_back(path);
    flatten_into(f.children, path, out);
  }
}

const SchemaField* find_in(const std::vector<SchemaField>& fields,
                           const std::vector<std::string>& segs, std::size_t idx) {
  for (const auto& f : fields) {
    if (f.name != segs[idx]) continue;
    if (idx + 1 == segs.size()) return &f;
    return find_in(f.children, segs, idx + 1);
  }
  return nullptr;
}

bool prune_fields(const std::vector<SchemaField>& fields, const FieldPath& prefix,
                  const std::set<FieldPath>& keep, std::vector<SchemaField>& out) {
  bool any = false;
  for (const auto& f : fields) {
    const FieldPath path = prefix.empty() ? *FieldPath::parse(f.name) : prefix.child(f.name);
    SchemaField copy = f;
    copy.children.clear();
    const bool kept_child = prune_fields(f.children, path, keep, copy.children);
    if (keep.count(path) || kept_child) {
      out.push_back(std::move(copy));
      any = true;
    }
  }
  return any;
}

}  // namespace

std::vector<FieldPath> flatten(const SchemaTree& s) {
  std::vector<FieldPath> out;
  flatten_into(s.fields, FieldPath{}, out);
  return out;
}

const SchemaField* find_field(const SchemaTree& s, const FieldPath& path) {
  if (path.empty()) return nullptr;
  return find_in(s.fields, path.segments(), 0);
}

SchemaTree prune(const SchemaTree& s, const std::set<FieldPath>& keep) {
  SchemaTree out;
  out.collection = s.collection;
  out.description = s.description;
  prune_fields(s.fields, FieldPath{}, keep, out.fields);
  return out;
}

namespace {

std::string example_list(const std::vector<Value>& examples) {
  std::string out = "[";
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (i) out += ", ";
    out += render_value(examples[i]);
  }
  out += "]";
  return out;
}

void render_ts_fields(const std::vector<SchemaField>& fields, int indent, std::string& out) {
  const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  for (const auto& f : fields) {
    out += pad + f.name + (f.optional ? "?" : "");
    if (!f.children.empty()) {
      out += ": ";
      if (f.array_of_documents) {
        out += "{\n";
        render_ts_fields(f.children, indent + 1, out);
        out += pad + "}[];";
      } else {
        out += "{\n";
        render_ts_fields(f.children, indent + 1, out);
        out += pad + "};";
      }
    } else {
      out += ": " + f.type_label() + ";";
    }
    std::string note;
    if (!f.description.empty()) note += f.description;
    if (f.indexed) note += note.empty() ? "indexed" : " (indexed)";
    if (!f.examples.empty()) {
      note += note.empty() ? "" : " | ";
      note += "e.g. " + example_list(f.examples);
    }
    if (!note.empty()) out += " // " + note;
    out += "\n";
  }
}

void render_mschema_fields(const std::vector<SchemaField>& fields, const FieldPath& prefix,
                           std::string& out) {
  for (const auto& f : fields) {
    const FieldPath path = prefix.empty() ? *FieldPath::parse(f.name) : prefix.child(f.name);
    out += path.dotted() + " (" + f.type_label() + ")";
    if (f.indexed) out += " [IDX]";
    out += ": " + f.description + ";";
    if (!f.examples.empty()) out += " examples=" + example_list(f.examples);
    out += "\n";
    render_mschema_fields(f.children, path, out);
  }
}

}  // namespace

std::string render_ts(const SchemaTree& s) {
  std::string out = "// Collection: " + s.collection;
  if (!s.description.empty()) out += " - " + s.description;
  out += "\n";
  std::string iface = s.collection;
  if (!iface.empty()) iface[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(iface[0])));
  out += "interface " + iface + " {\n";
  render_ts_fields(s.fields, 1, out);
  out += "}\n";
  return out;
}

std::string render_mschema(const SchemaTree& s) {
  std::string out = "[Collection] " + s.collection;
  if (!s.description.empty()) out += ": " + s.description;
  out += "\n";
  render_mschema_fields(s.fields, FieldPath{}, out);
  return out;
}

void apply_annotations_text(SchemaTree& s, const std::string& json_text) {
  nlohmann::json ann = nlohmann::json::parse(json_text);
  if (!ann.is_object()) throw ConfigError("annotations must be a JSON object");
  for (const auto& [key, val] : ann.items()) {
    if (key == s.collection) {
      if (val.is_string()) {
        s.description = val.get<std::string>();
      } else if (val.is_object() && val.contains("description")) {
        s.description = val["description"].get<std::string>();
      }
      continue;
    }
    const std::string want = s.collection + ".";
    if (key.rfind(want, 0) != 0) continue;
    auto path = FieldPath::parse(key.substr(want.size()));
    if (!path) continue;
    auto* field = const_cast<SchemaField*>(find_field(s, *path));
    if (field == nullptr) continue;
    if (val.is_string()) {
      field->description = val.get<std::string>();
    } else if (val.is_object()) {
      if (val.contains("description")) field->description = val["description"].get<std::string>();
      if (val.contains("indexed")) field->indexed = val["indexed"].get<bool>();
    }
  }
}

void apply_annotations(SchemaTree& s, const std::string& annotations_path) {
  std::ifstream in(annotations_path);
  if (!in) throw IoError("cannot open " + annotations_path);
  std::stringstream buf;
  buf << in.rdbuf();
  apply_annotations_text(s, buf.str());
}

}  // namespace dromql
