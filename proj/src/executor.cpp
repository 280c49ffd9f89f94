#include "dromql/executor.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <unordered_map>

#include "engine_detail.hpp"

namespace dromql {

namespace detail {

void resolve_match(const Value& v, const std::vector<std::string>& segs, std::size_t idx,
                   std::vector<const Value*>& out) {
  if (idx == segs.size()) {
    out.push_back(&v);
    return;
  }
  if (v.is_document()) {
    if (const Value* next = v.find(segs[idx])) resolve_match(*next, segs, idx + 1, out);
    return;
  }
  if (v.is_array()) {
    for (const auto& elem : v.as_array()) {
      if (elem.is_document()) resolve_match(elem, segs, idx, out);
    }
  }
}

bool leaf_eq(const Value& leaf, const Value& target) {
  if (query_equals(leaf, target)) return true;
  if (leaf.is_array()) {
    for (const auto& e : leaf.as_array()) {
      if (query_equals(e, target)) return true;
    }
  }
  return false;
}

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool leaf_eq_ci(const Value& leaf, const Value& target) {
  if (!target.is_string()) return leaf_eq(leaf, target);
  const std::string t = ascii_lower(target.as_string());
  auto eq_one = [&](const Value& x) {
    return x.is_string() && ascii_lower(x.as_string()) == t;
  };
  if (eq_one(leaf)) return true;
  if (leaf.is_array()) {
    for (const auto& e : leaf.as_array()) {
      if (eq_one(e)) return true;
    }
  }
  return false;
}

std::optional<int> compare_same_class(const Value& a, const Value& b) {
  auto sign = [](double d) { return d < 0 ? -1 : (d > 0 ? 1 : 0); };
  if (a.is_numeric() && b.is_numeric()) {
    if (a.is_int() && b.is_int()) {
      return a.as_int() < b.as_int() ? -1 : (a.as_int() > b.as_int() ? 1 : 0);
    }
    return sign(a.numeric() - b.numeric());
  }
  if (a.kind() != b.kind()) return std::nullopt;
  switch (a.kind()) {
    case Kind::Null: return 0;
    case Kind::Bool: return (a.as_bool() ? 1 : 0) - (b.as_bool() ? 1 : 0);
    case Kind::String: {
      const int c = a.as_string().compare(b.as_string());
      return c < 0 ? -1 : (c > 0 ? 1 : 0);
    }
    case Kind::Date:
      return a.as_date().ms < b.as_date().ms ? -1 : (a.as_date().ms > b.as_date().ms ? 1 : 0);
    case Kind::ObjectId:
      return a.as_oid().hex < b.as_oid().hex ? -1 : (a.as_oid().hex > b.as_oid().hex ? 1 : 0);
    default: return std::nullopt;
  }
}

void set_path(Value& doc, const FieldPath& path, Value v) {
  Value* cur = &doc;
  const auto& segs = path.segments();
  for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
    if (!cur->is_document()) *cur = Value(Value::Document{});
    Value* next = cur->find(segs[i]);
    if (next == nullptr) {
      cur->set(segs[i], Value(Value::Document{}));
      next = cur->find(segs[i]);
    } else if (!next->is_document()) {
      *next = Value(Value::Document{});
    }
    cur = next;
  }
  if (!cur->is_document()) *cur = Value(Value::Document{});
  cur->set(segs.back(), std::move(v));
}

namespace {

struct IncludeNode {
  bool terminal = false;
  std::vector<std::pair<std::string, IncludeNode>> children;

  IncludeNode* child(const std::string& name) {
    for (auto& [k, n] : children) {
      if (k == name) return &n;
    }
    children.emplace_back(name, IncludeNode{});
    return &children.back().second;
  }
  const IncludeNode* find(const std::string& name) const {
    for (const auto& [k, n] : children) {
      if (k == name) return &n;
    }
    return nullptr;
  }
};

std::optional<Value> include_walk(const Value& v, const IncludeNode& node) {
  if (node.terminal) return v;
  if (v.is_document()) {
    Value::Document out;
    for (const auto& e : v.as_document()) {
      if (const IncludeNode* child = node.find(e.key)) {
        if (auto sub = include_walk(e.value, *child)) {
          out.push_back(Value::Entry{e.key, std::move(*sub)});
        }
      }
    }
    if (out.empty()) return std::nullopt;
    return Value(std::move(out));
  }
  if (v.is_array()) {
    Value::Array out;
    for (const auto& elem : v.as_array()) {
      if (!elem.is_document()) continue;
      if (auto sub = include_walk(elem, node)) {
        out.push_back(std::move(*sub));
      } else {
        out.push_back(Value(Value::Document{}));
      }
    }
    return Value(std::move(out));
  }
  return std::nullopt;
}

}  // namespace

Value project_include(const Value& doc, const std::vector<FieldPath>& paths, bool keep_id) {
  IncludeNode root;
  if (keep_id) root.child("_id")->terminal = true;
  for (const auto& p : paths) {
    IncludeNode* cur = &root;
    for (const auto& seg : p.segments()) cur = cur->child(seg);
    cur->terminal = true;
  }
  auto out = include_walk(doc, root);
  return out ? *out : Value(Value::Document{});
}

}  // namespace detail

namespace {

using detail::compare_same_class;
using detail::leaf_eq;
using detail::resolve_match;
using detail::set_path;

constexpr std::size_t kMaxRows = 250000;

struct RuntimeHalt {
  std::string message;
};

[[noreturn]] void halt(std::string message) { throw RuntimeHalt{std::move(message)}; }

bool truthy(const Value& v) {
  if (v.is_null()) return false;
  if (v.is_bool()) return v.as_bool();
  if (v.is_numeric()) return v.numeric() != 0.0;
  return true;
}

// ---------------------------------------------------------------------------
// $match

bool match_condition(const Value& doc, const Value& cond);

bool eq_any(const std::vector<const Value*>& leaves, const Value& target) {
  for (const Value* leaf : leaves) {
    if (leaf_eq(*leaf, target)) return true;
  }
  if (target.is_null() && leaves.empty()) return true;  // null matches missing
  return false;
}

bool order_any(const std::vector<const Value*>& leaves, const Value& target, int lo, int hi) {
  auto holds = [&](const Value& x) {
    auto c = compare_same_class(x, target);
    return c && (*c == lo || *c == hi);
  };
  for (const Value* leaf : leaves) {
    if (holds(*leaf)) return true;
    if (leaf->is_array()) {
      for (const auto& e : leaf->as_array()) {
        if (holds(e)) return true;
      }
    }
  }
  return false;
}

bool regex_any(const std::vector<const Value*>& leaves, const std::regex& re) {
  auto holds = [&](const Value& x) {
    return x.is_string() && std::regex_search(x.as_string(), re);
  };
  for (const Value* leaf : leaves) {
    if (holds(*leaf)) return true;
    if (leaf->is_array()) {
      for (const auto& e : leaf->as_array()) {
        if (holds(e)) return true;
      }
    }
  }
  return false;
}

std::regex compile_regex(const Value& pattern, const Value* options) {
  if (!pattern.is_string()) halt("$regex requires a string pattern");
  auto flags = std::regex::ECMAScript;
  if (options != nullptr) {
    if (!options->is_string()) halt("$options must be a string");
    for (char c : options->as_string()) {
      if (c == 'i') {
        flags |= std::regex::icase;
      } else if (c != 'm' && c != 's' && c != 'x') {
        halt(std::string("unsupported regex option: ") + c);
      }
    }
  }
  try {
    return std::regex(pattern.as_string(), flags);
  } catch (const std::regex_error&) {
    halt("invalid regular expression: " + pattern.as_string());
  }
}

bool has_operator_key(const Value& v) {
  if (!v.is_document()) return false;
  for (const auto& e : v.as_document()) {
    if (!e.key.empty() && e.key[0] == '$') return true;
  }
  return false;
}

bool match_operator_doc(const Value& doc, const FieldPath& path, const Value& ops);

bool match_field_predicate(const Value& doc, const FieldPath& path, const Value& pred) {
  if (has_operator_key(pred)) return match_operator_doc(doc, path, pred);
  const auto leaves = resolve_match(doc, path);
  return eq_any(leaves, pred);
}

bool match_elem(const Value& elem, const Value& spec) {
  if (has_operator_key(spec)) {
    // Operator form applies directly to the element.
    for (const auto& e : spec.as_document()) {
      const std::string& op = e.key;
      std::vector<const Value*> self{&elem};
      if (op == "$eq") {
        if (!eq_any(self, e.value)) return false;
      } else if (op == "$ne") {
        if (eq_any(self, e.value)) return false;
      } else if (op == "$gt") {
        if (!order_any(self, e.value, 1, 1)) return false;
      } else if (op == "$gte") {
        if (!order_any(self, e.value, 1, 0)) return false;
      } else if (op == "$lt") {
        if (!order_any(self, e.value, -1, -1)) return false;
      } else if (op == "$lte") {
        if (!order_any(self, e.value, -1, 0)) return false;
      } else if (op == "$in") {
        if (!e.value.is_array()) halt("$in requires an array");
        bool any = false;
        for (const auto& cand : e.value.as_array()) any = any || eq_any(self, cand);
        if (!any) return false;
      } else if (op == "$regex") {
        const std::regex re = compile_regex(e.value, spec.find("$options"));
        if (!(elem.is_string() && std::regex_search(elem.as_string(), re))) return false;
      } else if (op == "$options") {
        continue;
      } else {
        halt("unsupported operator in $elemMatch: " + op);
      }
    }
    return true;
  }
  // Document form: sub-predicates relative to the element.
  return elem.is_document() && match_condition(elem, spec);
}

bool match_operator_doc(const Value& doc, const FieldPath& path, const Value& ops) {
  const auto leaves = resolve_match(doc, path);
  for (const auto& e : ops.as_document()) {
    const std::string& op = e.key;
    bool ok = true;
    if (op == "$eq") {
      ok = eq_any(leaves, e.value);
    } else if (op == "$ne") {
      ok = !eq_any(leaves, e.value);
    } else if (op == "$gt") {
      ok = order_any(leaves, e.value, 1, 1);
    } else if (op == "$gte") {
      ok = order_any(leaves, e.value, 1, 0);
    } else if (op == "$lt") {
      ok = order_any(leaves, e.value, -1, -1);
    } else if (op == "$lte") {
      ok = order_any(leaves, e.value, -1, 0);
    } else if (op == "$in") {
      if (!e.value.is_array()) halt("$in requires an array");
      ok = false;
      for (const auto& cand : e.value.as_array()) ok = ok || eq_any(leaves, cand);
    } else if (op == "$nin") {
      if (!e.value.is_array()) halt("$nin requires an array");
      ok = true;
      for (const auto& cand : e.value.as_array()) ok = ok && !eq_any(leaves, cand);
    } else if (op == "$regex") {
      ok = regex_any(leaves, compile_regex(e.value, ops.find("$options")));
    } else if (op == "$options") {
      if (ops.find("$regex") == nullptr) halt("$options without $regex");
      ok = true;
    } else if (op == "$exists") {
      ok = leaves.empty() != truthy(e.value);
    } else if (op == "$not") {
      if (!e.value.is_document() || !has_operator_key(e.value)) {
        halt("$not requires an operator document");
      }
      ok = !match_operator_doc(doc, path, e.value);
    } else if (op == "$elemMatch") {
      if (!e.value.is_document()) halt("$elemMatch requires a document");
      ok = false;
      for (const Value* leaf : leaves) {
        if (!leaf->is_array()) continue;
        for (const auto& elem : leaf->as_array()) {
          if (match_elem(elem, e.value)) {
            ok = true;
            break;
          }
        }
        if (ok) break;
      }
    } else if (!op.empty() && op[0] == '$') {
      halt("unsupported match operator: " + op);
    } else {
      halt("cannot mix operators and fields in a predicate: " + op);
    }
    if (!ok) return false;
  }
  return true;
}

bool match_condition(const Value& doc, const Value& cond) {
  if (!cond.is_document()) halt("$match requires a document");
  for (const auto& e : cond.as_document()) {
    if (e.key == "$and" || e.key == "$or" || e.key == "$nor") {
      if (!e.value.is_array() || e.value.as_array().empty()) {
        halt(e.key + " requires a non-empty array");
      }
      bool any = false, all = true;
      for (const auto& sub : e.value.as_array()) {
        const bool m = match_condition(doc, sub);
        any = any || m;
        all = all && m;
      }
      const bool ok = (e.key == "$and") ? all : (e.key == "$or") ? any : !any;
      if (!ok) return false;
    } else if (e.key == "$comment") {
      continue;
    } else if (!e.key.empty() && e.key[0] == '$') {
      halt("unsupported query operator: " + e.key);
    } else {
      auto path = FieldPath::parse(e.key);
      if (!path) halt("invalid field path in $match: " + e.key);
      if (!match_field_predicate(doc, *path, e.value)) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Expressions

std::optional<Value> resolve_expr_path(const Value& doc, const FieldPath& path) {
  const Value* cur = &doc;
  for (const auto& seg : path.segments()) {
    if (!cur->is_document()) return std::nullopt;
    cur = cur->find(seg);
    if (cur == nullptr) return std::nullopt;
  }
  return *cur;
}

std::optional<Value> eval_expr(const Value& doc, const Value& expr);

std::vector<std::optional<Value>> eval_args(const Value& doc, const Value& args,
                                            const std::string& op, std::size_t arity) {
  if (!args.is_array()) halt(op + " requires an argument array");
  if (arity != 0 && args.as_array().size() != arity) {
    halt(op + " requires " + std::to_string(arity) + " arguments");
  }
  std::vector<std::optional<Value>> out;
  for (const auto& a : args.as_array()) out.push_back(eval_expr(doc, a));
  return out;
}

std::optional<Value> eval_arith(const Value& doc, const std::string& op, const Value& args) {
  const auto vals = eval_args(doc, args, op, op == "$subtract" || op == "$divide" ? 2 : 0);
  if (vals.empty()) halt(op + " requires at least one argument");
  bool all_int = true;
  for (const auto& v : vals) {
    if (!v || v->is_null()) return Value(nullptr);
    if (!v->is_numeric()) halt(op + " requires numeric arguments");
    all_int = all_int && v->is_int();
  }
  if (op == "$divide") {
    const double denom = vals[1]->numeric();
    if (denom == 0.0) halt("$divide by zero");
    return Value(vals[0]->numeric() / denom);
  }
  if (op == "$subtract") {
    if (all_int) return Value(vals[0]->as_int() - vals[1]->as_int());
    return Value(vals[0]->numeric() - vals[1]->numeric());
  }
  if (op == "$add") {
    if (all_int) {
      std::int64_t s = 0;
      for (const auto& v : vals) s += v->as_int();
      return Value(s);
    }
    double s = 0;
    for (const auto& v : vals) s += v->numeric();
    return Value(s);
  }
  // $multiply
  if (all_int) {
    std::int64_t s = 1;
    for (const auto& v : vals) s *= v->as_int();
    return Value(s);
  }
  double s = 1;
  for (const auto& v : vals) s *= v->numeric();
  return Value(s);
}

std::optional<Value> eval_comparison(const Value& doc, const std::string& op, const Value& args) {
  const auto vals = eval_args(doc, args, op, 2);
  const Value a = vals[0] ? *vals[0] : Value(nullptr);
  const Value b = vals[1] ? *vals[1] : Value(nullptr);
  if (op == "$eq") return Value(query_equals(a, b));
  if (op == "$ne") return Value(!query_equals(a, b));
  const auto c = compare_same_class(a, b);
  if (!c) halt(op + " cannot compare " + std::string(kind_name(a.kind())) + " with " +
               std::string(kind_name(b.kind())));
  if (op == "$gt") return Value(*c > 0);
  if (op == "$gte") return Value(*c >= 0);
  if (op == "$lt") return Value(*c < 0);
  return Value(*c <= 0);  // $lte
}

std::optional<Value> eval_operator_expr(const Value& doc, const std::string& op,
                                        const Value& args) {
  if (op == "$add" || op == "$subtract" || op == "$multiply" || op == "$divide") {
    return eval_arith(doc, op, args);
  }
  if (op == "$eq" || op == "$ne" || op == "$gt" || op == "$gte" || op == "$lt" || op == "$lte") {
    return eval_comparison(doc, op, args);
  }
  if (op == "$concat") {
    const auto vals = eval_args(doc, args, op, 0);
    std::string out;
    for (const auto& v : vals) {
      if (!v || v->is_null()) return Value(nullptr);
      if (!v->is_string()) halt("$concat requires string arguments");
      out += v->as_string();
    }
    return Value(std::move(out));
  }
  if (op == "$size") {
    std::optional<Value> v;
    if (args.is_array() && args.as_array().size() == 1) {
      v = eval_expr(doc, args.as_array()[0]);
    } else {
      v = eval_expr(doc, args);
    }
    if (!v || !v->is_array()) halt("$size requires an array argument");
    return Value(static_cast<std::int64_t>(v->as_array().size()));
  }
  if (op == "$cond") {
    const Value* cond_expr = nullptr;
    const Value* then_expr = nullptr;
    const Value* else_expr = nullptr;
    if (args.is_array() && args.as_array().size() == 3) {
      cond_expr = &args.as_array()[0];
      then_expr = &args.as_array()[1];
      else_expr = &args.as_array()[2];
    } else if (args.is_document()) {
      cond_expr = args.find("if");
      then_expr = args.find("then");
      else_expr = args.find("else");
    }
    if (cond_expr == nullptr || then_expr == nullptr || else_expr == nullptr) {
      halt("$cond requires if/then/else");
    }
    const auto c = eval_expr(doc, *cond_expr);
    return eval_expr(doc, (c && truthy(*c)) ? *then_expr : *else_expr);
  }
  halt("unsupported expression operator: " + op);
}

std::optional<Value> eval_expr(const Value& doc, const Value& expr) {
  if (expr.is_string()) {
    const std::string& s = expr.as_string();
    if (s.size() >= 2 && s[0] == '$' && s[1] == '$') halt("unsupported variable: " + s);
    if (!s.empty() && s[0] == '$') {
      auto path = FieldPath::parse(std::string_view(s).substr(1));
      if (!path) halt("invalid field reference: " + s);
      return resolve_expr_path(doc, *path);
    }
    return expr;
  }
  if (expr.is_document()) {
    const auto& d = expr.as_document();
    if (!d.empty() && !d[0].key.empty() && d[0].key[0] == '$') {
      if (d.size() != 1) halt("expression operator documents take a single key");
      return eval_operator_expr(doc, d[0].key, d[0].value);
    }
    Value::Document out;
    for (const auto& e : d) {
      if (auto v = eval_expr(doc, e.value)) {
        out.push_back(Value::Entry{e.key, std::move(*v)});
      }
    }
    return Value(std::move(out));
  }
  if (expr.is_array()) {
    Value::Array out;
    for (const auto& e : expr.as_array()) {
      auto v = eval_expr(doc, e);
      out.push_back(v ? std::move(*v) : Value(nullptr));
    }
    return Value(std::move(out));
  }
  return expr;
}

// ---------------------------------------------------------------------------
// Stages

std::vector<Document> stage_match(std::vector<Document> rows, const Value& body) {
  if (!body.is_document()) halt("$match requires a document");
  std::vector<Document> out;
  for (auto& doc : rows) {
    if (match_condition(doc, body)) out.push_back(std::move(doc));
  }
  return out;
}

bool all_flags(const Value& v);
void remove_path(Value& doc, const FieldPath& path);

std::vector<Document> stage_project(std::vector<Document> rows, const Value& body) {
  if (!body.is_document() || body.as_document().empty()) {
    halt("$project requires a non-empty document");
  }
  bool id_excluded = false;
  bool id_explicit_include = false;
  std::vector<FieldPath> includes;
  std::vector<FieldPath> excludes;
  std::vector<std::pair<FieldPath, const Value*>> computed;

  auto classify = [&](auto&& self, const FieldPath& prefix, const Value& v) -> void {
    for (const auto& e : v.as_document()) {
      auto path = prefix.empty() ? FieldPath::parse(e.key)
                                 : FieldPath::parse(prefix.dotted() + "." + e.key);
      if (!path) halt("invalid field path in $project: " + e.key);
      const Value& spec = e.value;
      const bool is_flag = spec.is_bool() || spec.is_numeric();
      if (is_flag) {
        if (truthy(spec)) {
          if (path->dotted() == "_id") {
            id_explicit_include = true;
          } else {
            includes.push_back(*path);
          }
        } else {
          if (path->dotted() == "_id") {
            id_excluded = true;
          } else {
            excludes.push_back(*path);
          }
        }
      } else if (spec.is_document() && !has_operator_key(spec) && !spec.as_document().empty() &&
                 all_flags(spec)) {
        self(self, *path, spec);
      } else {
        computed.emplace_back(*path, &spec);
      }
    }
  };
  classify(classify, FieldPath{}, body);

  if (!excludes.empty() && (!includes.empty() || !computed.empty())) {
    halt("$project cannot mix inclusion and exclusion");
  }

  std::vector<Document> out;
  out.reserve(rows.size());
  if (!excludes.empty() || (includes.empty() && computed.empty())) {
    // Exclusion projection.
    for (const auto& doc : rows) {
      Value copy = doc;
      for (const auto& p : excludes) remove_path(copy, p);
      if (id_excluded) remove_path(copy, *FieldPath::parse("_id"));
      out.push_back(std::move(copy));
    }
    return out;
  }
  for (const auto& doc : rows) {
    Value projected = detail::project_include(doc, includes, !id_excluded);
    (void)id_explicit_include;
    for (const auto& [path, expr] : computed) {
      if (auto v = eval_expr(doc, *expr)) set_path(projected, path, std::move(*v));
    }
    out.push_back(std::move(projected));
  }
  return out;
}

bool all_flags_impl(const Value& v) {
  for (const auto& e : v.as_document()) {
    if (e.value.is_bool() || e.value.is_numeric()) continue;
    if (e.value.is_document() && !has_operator_key(e.value) && !e.value.as_document().empty() &&
        all_flags_impl(e.value)) {
      continue;
    }
    return false;
  }
  return true;
}

bool all_flags(const Value& v) { return all_flags_impl(v); }

void remove_path(Value& doc, const FieldPath& path) {
  if (!doc.is_document()) {
    if (doc.is_array()) {
      for (auto& elem : doc.as_array()) remove_path(elem, path);
    }
    return;
  }
  const auto& segs = path.segments();
  Value* cur = &doc;
  for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
    Value* next = cur->find(segs[i]);
    if (next == nullptr) return;
    if (next->is_array()) {
      FieldPath rest(std::vector<std::string>(segs.begin() + i + 1, segs.end()));
      for (auto& elem : next->as_array()) remove_path(elem, rest);
      return;
    }
    if (!next->is_document()) return;
    cur = next;
  }
  auto& entries = cur->as_document();
  for (auto it = entries.begin(); it != entries.end(); ++it) {
    if (it->key == segs.back()) {
      entries.erase(it);
      return;
    }
  }
}

std::vector<Document> stage_add_fields(std::vector<Document> rows, const Value& body) {
  if (!body.is_document()) halt("$addFields requires a document");
  std::vector<Document> out;
  out.reserve(rows.size());
  for (const auto& doc : rows) {
    Value copy = doc;
    for (const auto& e : body.as_document()) {
      auto path = FieldPath::parse(e.key);
      if (!path) halt("invalid field path in $addFields: " + e.key);
      if (auto v = eval_expr(doc, e.value)) set_path(copy, *path, std::move(*v));
    }
    out.push_back(std::move(copy));
  }
  return out;
}

struct GroupSlot {
  Value key_value;
  std::vector<std::vector<std::optional<Value>>> operands;  // per accumulator
};

Value finalize_accumulator(const std::string& op, const std::vector<std::optional<Value>>& vals,
                           std::size_t group_size) {
  if (op == "$count") return Value(static_cast<std::int64_t>(group_size));
  if (op == "$sum") {
    bool all_int = true;
    bool any = false;
    double total = 0;
    std::int64_t itotal = 0;
    for (const auto& v : vals) {
      if (!v || !v->is_numeric()) continue;
      any = true;
      all_int = all_int && v->is_int();
      total += v->numeric();
      if (v->is_int()) itotal += v->as_int();
    }
    if (!any) return Value(static_cast<std::int64_t>(0));
    return all_int ? Value(itotal) : Value(total);
  }
  if (op == "$avg") {
    double total = 0;
    std::size_t n = 0;
    for (const auto& v : vals) {
      if (!v || !v->is_numeric()) continue;
      total += v->numeric();
      ++n;
    }
    return n == 0 ? Value(nullptr) : Value(total / static_cast<double>(n));
  }
  if (op == "$min" || op == "$max") {
    const Value* best = nullptr;
    for (const auto& v : vals) {
      if (!v || v->is_null()) continue;
      if (best == nullptr) {
        best = &*v;
        continue;
      }
      const auto c = compare_same_class(*v, *best);
      if (!c) halt(op + " over mixed kinds");
      if ((op == "$min" && *c < 0) || (op == "$max" && *c > 0)) best = &*v;
    }
    return best ? *best : Value(nullptr);
  }
  if (op == "$push") {
    Value::Array arr;
    for (const auto& v : vals) {
      if (v) arr.push_back(*v);
    }
    return Value(std::move(arr));
  }
  if (op == "$addToSet") {
    Value::Array arr;
    std::vector<std::string> seen;
    for (const auto& v : vals) {
      if (!v) continue;
      const std::string key = group_key(*v);
      if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
      seen.push_back(key);
      arr.push_back(*v);
    }
    return Value(std::move(arr));
  }
  if (op == "$first") {
    for (const auto& v : vals) return v ? *v : Value(nullptr);
    return Value(nullptr);
  }
  if (op == "$last") {
    if (vals.empty()) return Value(nullptr);
    return vals.back() ? *vals.back() : Value(nullptr);
  }
  halt("unsupported accumulator: " + op);
}

std::vector<Document> stage_group(std::vector<Document> rows, const Value& body) {
  if (!body.is_document()) halt("$group requires a document");
  const Value* id_expr = body.find("_id");
  if (id_expr == nullptr) halt("$group requires _id");
  struct Acc {
    std::string out_key;
    std::string op;
    const Value* arg;
  };
  std::vector<Acc> accs;
  for (const auto& e : body.as_document()) {
    if (e.key == "_id") continue;
    if (!e.value.is_document() || e.value.as_document().size() != 1 ||
        e.value.as_document()[0].key.empty() || e.value.as_document()[0].key[0] != '$') {
      halt("accumulator for '" + e.key + "' must be a single $-operator document");
    }
    const auto& acc_entry = e.value.as_document()[0];
    if (acc_entry.key == "$count" &&
        !(acc_entry.value.is_document() && acc_entry.value.as_document().empty())) {
      halt("$count accumulator takes an empty document");
    }
    accs.push_back(Acc{e.key, acc_entry.key, &acc_entry.value});
  }

  std::vector<GroupSlot> groups;  // first-appearance order
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::size_t> sizes;
  for (const auto& doc : rows) {
    auto key_val = eval_expr(doc, *id_expr);
    const Value key_value = key_val ? *key_val : Value(nullptr);
    const std::string key = group_key(key_value);
    auto it = index.find(key);
    std::size_t slot;
    if (it == index.end()) {
      slot = groups.size();
      index.emplace(key, slot);
      groups.push_back(GroupSlot{key_value, {}});
      groups.back().operands.resize(accs.size());
      sizes.push_back(0);
    } else {
      slot = it->second;
    }
    ++sizes[slot];
    for (std::size_t a = 0; a < accs.size(); ++a) {
      groups[slot].operands[a].push_back(eval_expr(doc, *accs[a].arg));
    }
  }

  std::vector<Document> out;
  out.reserve(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    Value::Document row;
    row.push_back(Value::Entry{"_id", groups[g].key_value});
    for (std::size_t a = 0; a < accs.size(); ++a) {
      row.push_back(
          Value::Entry{accs[a].out_key, finalize_accumulator(accs[a].op, groups[g].operands[a],
                                                             sizes[g])});
    }
    out.push_back(Value(std::move(row)));
  }
  return out;
}

std::vector<Document> stage_unwind(std::vector<Document> rows, const Value& body) {
  std::string path_text;
  if (body.is_string()) {
    path_text = body.as_string();
  } else if (body.is_document()) {
    const Value* p = body.find("path");
    if (p == nullptr || !p->is_string()) halt("$unwind requires a path");
    path_text = p->as_string();
  } else {
    halt("$unwind requires a path string or document");
  }
  if (path_text.empty() || path_text[0] != '$') halt("$unwind path must start with '$'");
  auto path = FieldPath::parse(std::string_view(path_text).substr(1));
  if (!path) halt("invalid $unwind path: " + path_text);

  std::vector<Document> out;
  for (const auto& doc : rows) {
    const auto v = resolve_expr_path(doc, *path);
    if (!v || v->is_null()) continue;
    if (!v->is_array()) {
      out.push_back(doc);
      continue;
    }
    for (const auto& elem : v->as_array()) {
      Value copy = doc;
      set_path(copy, *path, elem);
      out.push_back(std::move(copy));
    }
  }
  return out;
}

std::vector<Document> stage_sort(std::vector<Document> rows, const Value& body) {
  if (!body.is_document() || body.as_document().empty()) {
    halt("$sort requires a non-empty document");
  }
  struct Key {
    FieldPath path;
    int direction;
  };
  std::vector<Key> keys;
  for (const auto& e : body.as_document()) {
    if (!e.value.is_numeric() || (e.value.numeric() != 1.0 && e.value.numeric() != -1.0)) {
      halt("$sort directions must be 1 or -1");
    }
    auto path = FieldPath::parse(e.key);
    if (!path) halt("invalid sort key: " + e.key);
    keys.push_back(Key{*path, e.value.numeric() > 0 ? 1 : -1});
  }

  // Missing sorts before present (ascending); comparisons outside one
  // comparability class are runtime errors.
  std::vector<std::vector<std::optional<Value>>> sort_keys(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (const auto& k : keys) {
      auto v = resolve_expr_path(rows[i], k.path);
      if (v && (v->is_array() || v->is_document())) {
        halt("$sort key '" + k.path.dotted() + "' is not comparable");
      }
      sort_keys[i].push_back(std::move(v));
    }
  }
  std::vector<std::size_t> order(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::optional<std::string> error;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (error) return false;
    for (std::size_t k = 0; k < keys.size(); ++k) {
      const auto& va = sort_keys[a][k];
      const auto& vb = sort_keys[b][k];
      int c;
      if (!va && !vb) {
        c = 0;
      } else if (!va) {
        c = -1;
      } else if (!vb) {
        c = 1;
      } else {
        const auto cc = compare_same_class(*va, *vb);
        if (!cc) {
          error = "$sort over mixed kinds on '" + keys[k].path.dotted() + "'";
          return false;
        }
        c = *cc;
      }
      c *= keys[k].direction;
      if (c != 0) return c < 0;
    }
    return false;
  });
  if (error) halt(*error);
  std::vector<Document> out;
  out.reserve(rows.size());
  for (std::size_t i : order) out.push_back(std::move(rows[i]));
  return out;
}

std::int64_t int_arg(const Value& v, const std::string& stage) {
  if (v.is_int()) return v.as_int();
  if (v.is_float() && v.as_float() == std::floor(v.as_float())) {
    return static_cast<std::int64_t>(v.as_float());
  }
  halt(stage + " requires an integer");
}

std::vector<Document> stage_lookup(std::vector<Document> rows, const Value& body,
                                   const Database& db) {
  if (!body.is_document()) halt("$lookup requires a document");
  if (body.find("pipeline") != nullptr) halt("$lookup pipeline form is unsupported");
  const Value* from = body.find("from");
  const Value* local = body.find("localField");
  const Value* foreign = body.find("foreignField");
  const Value* as = body.find("as");
  if (from == nullptr || !from->is_string() || local == nullptr || !local->is_string() ||
      foreign == nullptr || !foreign->is_string() || as == nullptr || !as->is_string()) {
    halt("$lookup requires from/localField/foreignField/as strings");
  }
  if (!db.has_collection(from->as_string())) {
    halt("unknown collection in $lookup: " + from->as_string());
  }
  auto local_path = FieldPath::parse(local->as_string());
  auto foreign_path = FieldPath::parse(foreign->as_string());
  auto as_path = FieldPath::parse(as->as_string());
  if (!local_path || !foreign_path || !as_path) halt("invalid field path in $lookup");

  // Equality with array descent on both sides; a missing side behaves as null.
  auto candidates = [](const Value& doc, const FieldPath& path) {
    std::vector<Value> vals;
    for (const Value* leaf : resolve_match(doc, path)) {
      vals.push_back(*leaf);
      if (leaf->is_array()) {
        for (const auto& e : leaf->as_array()) vals.push_back(e);
      }
    }
    if (vals.empty()) vals.push_back(Value(nullptr));
    return vals;
  };

  const auto& foreign_rows = db.collection(from->as_string());
  std::vector<std::vector<Value>> foreign_keys;
  foreign_keys.reserve(foreign_rows.size());
  for (const auto& f : foreign_rows) foreign_keys.push_back(candidates(f, *foreign_path));

  std::vector<Document> out;
  out.reserve(rows.size());
  for (const auto& doc : rows) {
    const auto local_vals = candidates(doc, *local_path);
    Value::Array matches;
    for (std::size_t i = 0; i < foreign_rows.size(); ++i) {
      bool hit = false;
      for (const auto& lv : local_vals) {
        for (const auto& fv : foreign_keys[i]) {
          if (query_equals(lv, fv)) {
            hit = true;
            break;
          }
        }
        if (hit) break;
      }
      if (hit) matches.push_back(foreign_rows[i]);
    }
    Value copy = doc;
    set_path(copy, *as_path, Value(std::move(matches)));
    out.push_back(std::move(copy));
  }
  return out;
}

std::vector<Document> stage_count(std::vector<Document> rows, const Value& body) {
  if (!body.is_string() || body.as_string().empty() || body.as_string()[0] == '$' ||
      body.as_string().find('.') != std::string::npos) {
    halt("$count requires a plain field name");
  }
  if (rows.empty()) return {};
  Value::Document row;
  row.push_back(Value::Entry{body.as_string(), Value(static_cast<std::int64_t>(rows.size()))});
  return {Value(std::move(row))};
}

}  // namespace

ExecOutcome execute(const Pipeline& p, const Database& db) {
  try {
    if (!db.has_collection(p.collection)) halt("unknown collection: " + p.collection);
    std::vector<Document> rows = db.collection(p.collection);
    for (const auto& st : p.stages) {
      if (!st.supported) halt("unsupported stage: " + st.op);
      if (st.op == "$match") {
        rows = stage_match(std::move(rows), st.body);
      } else if (st.op == "$project") {
        rows = stage_project(std::move(rows), st.body);
      } else if (st.op == "$group") {
        rows = stage_group(std::move(rows), st.body);
      } else if (st.op == "$unwind") {
        rows = stage_unwind(std::move(rows), st.body);
      } else if (st.op == "$sort") {
        rows = stage_sort(std::move(rows), st.body);
      } else if (st.op == "$limit") {
        const std::int64_t n = int_arg(st.body, "$limit");
        if (n < 0) halt("$limit must be non-negative");
        if (static_cast<std::size_t>(n) < rows.size()) rows.resize(static_cast<std::size_t>(n));
      } else if (st.op == "$skip") {
        const std::int64_t n = int_arg(st.body, "$skip");
        if (n < 0) halt("$skip must be non-negative");
        rows.erase(rows.begin(),
                   rows.begin() + std::min<std::size_t>(rows.size(), static_cast<std::size_t>(n)));
      } else if (st.op == "$lookup") {
        rows = stage_lookup(std::move(rows), st.body, db);
      } else if (st.op == "$count") {
        rows = stage_count(std::move(rows), st.body);
      } else if (st.op == "$addFields") {
        rows = stage_add_fields(std::move(rows), st.body);
      } else {
        halt("unsupported stage: " + st.op);
      }
      if (rows.size() > kMaxRows) halt("result exceeds row limit");
    }
    return ExecOutcome::make_ok(std::move(rows));
  } catch (const RuntimeHalt& h) {
    return ExecOutcome::make_runtime(h.message);
  }
}

namespace {

void flatten_leaves(const Value& v, const FieldPath& prefix, std::set<FieldPath>& out) {
  if (v.is_document()) {
    if (v.as_document().empty()) {
      if (!prefix.empty()) out.insert(prefix);
      return;
    }
    for (const auto& e : v.as_document()) flatten_leaves(e.value, prefix.child(e.key), out);
    return;
  }
  if (v.is_array()) {
    if (v.as_array().empty()) {
      if (!prefix.empty()) out.insert(prefix);
      return;
    }
    for (const auto& e : v.as_array()) {
      if (e.is_document() || e.is_array()) {
        flatten_leaves(e, prefix, out);
      } else if (!prefix.empty()) {
        out.insert(prefix);
      }
    }
    return;
  }
  if (!prefix.empty()) out.insert(prefix);
}

}  // namespace

std::set<FieldPath> returned_field_set(const std::vector<Document>& rows) {
  std::set<FieldPath> out;
  for (const auto& row : rows) flatten_leaves(row, FieldPath{}, out);
  return out;
}

bool result_is_ordered(const Pipeline& p) {
  bool ordered = false;
  for (const auto& st : p.stages) {
    if (st.op == "$sort") {
      ordered = true;
    } else if (st.op == "$group" || st.op == "$count") {
      ordered = false;
    }
  }
  return ordered;
}

ProbeEvidence probe_match(const Database& db, const std::string& collection,
                          const FieldPath& field, const Value& value) {
  const auto& rows = db.collection(collection);  // throws UnknownCollectionError
  ProbeEvidence ev;
  ev.field = field;
  ev.value = value;

  auto scan = [&](bool case_insensitive) {
    std::vector<const Document*> hits;
    for (const auto& doc : rows) {
      for (const Value* leaf : detail::resolve_match(doc, field)) {
        const bool hit = case_insensitive ? detail::leaf_eq_ci(*leaf, value)
                                          : detail::leaf_eq(*leaf, value);
        if (hit) {
          hits.push_back(&doc);
          break;
        }
      }
    }
    return hits;
  };

  std::vector<const Document*> hits = scan(false);
  if (hits.empty() && value.is_string()) {
    hits = scan(true);
    ev.case_insensitive = !hits.empty();
  }
  ev.matched = !hits.empty();
  for (std::size_t i = 0; i < hits.size() && i < 3; ++i) {
    ev.sample.push_back(detail::project_include(*hits[i], {field}, true));
  }
  return ev;
}

}  // namespace dromql
