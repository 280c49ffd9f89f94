#include "dromql/ast.hpp"

#include <array>
#include <cctype>
#include <tuple>

namespace dromql {

namespace {

constexpr std::array<std::string_view, 10> kSupportedStages = {
    "$match", "$project", "$group", "$unwind", "$sort",
    "$limit", "$skip",    "$lookup", "$count", "$addFields"};

bool is_plain_ident(std::string_view s) {
  if (s.empty()) return false;
  if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_') return false;
  for (char c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  }
  return true;
}

}  // namespace

bool stage_is_supported(std::string_view op) {
  for (auto s : kSupportedStages) {
    if (s == op) return true;
  }
  return false;
}

std::string_view pred_op_name(PredOp op) {
  switch (op) {
    case PredOp::Eq: return "eq";
    case PredOp::Ne: return "ne";
    case PredOp::Gt: return "gt";
    case PredOp::Gte: return "gte";
    case PredOp::Lt: return "lt";
    case PredOp::Lte: return "lte";
    case PredOp::In: return "in";
    case PredOp::Nin: return "nin";
    case PredOp::Regex: return "regex";
    case PredOp::Exists: return "exists";
    case PredOp::ElemMatch: return "elemMatch";
  }
  return "?";
}

bool operator<(const ValuePredicate& a, const ValuePredicate& b) {
  return std::tie(a.path, a.op) < std::tie(b.path, b.op) ||
         (a.path == b.path && a.op == b.op && render_value(a.value) < render_value(b.value));
}

bool operator==(const ValuePredicate& a, const ValuePredicate& b) {
  return a.path == b.path && a.op == b.op && a.value == b.value;
}

std::string render_pipeline(const Pipeline& p) {
  std::string out = "db.";
  if (is_plain_ident(p.collection)) {
    out += p.collection;
  } else {
    out += "getCollection(\"";
    out += json_escape(p.collection);
    out += "\")";
  }
  out += ".aggregate([";
  bool first = true;
  for (const auto& st : p.stages) {
    if (!first) out += ',';
    first = false;
    out += "{\"";
    out += json_escape(st.op);
    out += "\":";
    out += render_value(st.body);
    out += '}';
  }
  out += "])";
  return out;
}

namespace {

bool has_operator_key(const Value& v) {
  if (!v.is_document()) return false;
  for (const auto& e : v.as_document()) {
    if (!e.key.empty() && e.key[0] == '$') return true;
  }
  return false;
}

std::optional<FieldPath> join_path(const FieldPath& prefix, std::string_view key) {
  auto tail = FieldPath::parse(key);
  if (!tail) return std::nullopt;
  std::vector<std::string> segs = prefix.segments();
  for (const auto& s : tail->segments()) segs.push_back(s);
  return FieldPath(std::move(segs));
}

// Field references written as "$a.b" inside expression bodies. "$$"-variables
// are not field references.
std::optional<FieldPath> expr_ref(const Value& v) {
  if (!v.is_string()) return std::nullopt;
  const std::string& s = v.as_string();
  if (s.size() < 2 || s[0] != '$' || s[1] == '$') return std::nullopt;
  return FieldPath::parse(std::string_view(s).substr(1));
}

struct Walker {
  std::set<FieldPath> fields;
  std::set<ValuePredicate> predicates;

  void add_field(const std::optional<FieldPath>& p) {
    if (p && !p->empty() && !p->segments().front().empty() && p->segments().front()[0] != '$') {
      fields.insert(*p);
    }
  }

  void add_pred(const FieldPath& path, PredOp op, Value value) {
    if (path.empty() || path.segments().front()[0] == '$') return;
    predicates.insert(ValuePredicate{path, op, std::move(value)});
  }

  void walk_expr(const Value& v) {
    if (auto ref = expr_ref(v)) {
      add_field(ref);
      return;
    }
    if (v.is_array()) {
      for (const auto& e : v.as_array()) walk_expr(e);
      return;
    }
    if (v.is_document()) {
      for (const auto& e : v.as_document()) walk_expr(e.value);
    }
  }

  void walk_match(const Value& v, const FieldPath& prefix) {
    if (!v.is_document()) return;
    for (const auto& e : v.as_document()) {
      if (!e.key.empty() && e.key[0] == '$') {
        if ((e.key == "$and" || e.key == "$or" || e.key == "$nor") && e.value.is_array()) {
          for (const auto& sub : e.value.as_array()) walk_match(sub, prefix);
        }
        // $expr/$text and friends are excluded from extraction.
        continue;
      }
      auto path = join_path(prefix, e.key);
      if (!path) continue;
      walk_match_value(*path, e.value);
    }
  }

  void walk_match_value(const FieldPath& path, const Value& v) {
    if (v.is_document() && has_operator_key(v)) {
      add_field(path);
      walk_operator_doc(path, v);
      return;
    }
    if (v.is_document() && !v.as_document().empty()) {
      // {a:{b:1}} normalizes to the dotted path a.b.
      walk_match(v, path);
      return;
    }
    add_field(path);
    add_pred(path, PredOp::Eq, v);
  }

  void walk_operator_doc(const FieldPath& path, const Value& v) {
    for (const auto& e : v.as_document()) {
      const std::string& op = e.key;
      if (op == "$eq") add_pred(path, PredOp::Eq, e.value);
      else if (op == "$ne") add_pred(path, PredOp::Ne, e.value);
      else if (op == "$gt") add_pred(path, PredOp::Gt, e.value);
      else if (op == "$gte") add_pred(path, PredOp::Gte, e.value);
      else if (op == "$lt") add_pred(path, PredOp::Lt, e.value);
      else if (op == "$lte") add_pred(path, PredOp::Lte, e.value);
      else if (op == "$in" && e.value.is_array()) add_pred(path, PredOp::In, e.value);
      else if (op == "$nin" && e.value.is_array()) add_pred(path, PredOp::Nin, e.value);
      else if (op == "$regex" && e.value.is_string()) add_pred(path, PredOp::Regex, e.value);
      else if (op == "$exists") {
        add_pred(path, PredOp::Exists, Value(truthy(e.value)));
      } else if (op == "$not" && e.value.is_document()) {
        walk_operator_doc(path, e.value);
      } else if (op == "$elemMatch" && e.value.is_document()) {
        if (has_operator_key(e.value)) {
          walk_operator_doc(path, e.value);
        } else {
          walk_match(e.value, path);
        }
      }
    }
  }

  static bool truthy(const Value& v) {
    if (v.is_bool()) return v.as_bool();
    if (v.is_numeric()) return v.numeric() != 0.0;
    return !v.is_null();
  }

  void walk_stage(const Stage& st) {
    if (st.op == "$match") {
      walk_match(st.body, FieldPath{});
    } else if (st.op == "$sort") {
      if (st.body.is_document()) {
        for (const auto& e : st.body.as_document()) add_field(FieldPath::parse(e.key));
      }
    } else if (st.op == "$project") {
      if (st.body.is_document()) {
        for (const auto& e : st.body.as_document()) {
          if (!e.key.empty() && e.key[0] != '$') add_field(FieldPath::parse(e.key));
          if (!is_flag(e.value)) walk_expr(e.value);
        }
      }
    } else if (st.op == "$group") {
      if (st.body.is_document()) {
        for (const auto& e : st.body.as_document()) {
          if (e.key == "_id") {
            walk_expr(e.value);
          } else if (e.value.is_document()) {
            for (const auto& acc : e.value.as_document()) walk_expr(acc.value);
          }
        }
      }
    } else if (st.op == "$unwind") {
      if (st.body.is_string()) {
        add_field(expr_ref(st.body));
      } else if (st.body.is_document()) {
        if (const Value* p = st.body.find("path")) add_field(expr_ref(*p));
      }
    } else if (st.op == "$addFields") {
      if (st.body.is_document()) {
        for (const auto& e : st.body.as_document()) walk_expr(e.value);
      }
    } else if (st.op == "$lookup") {
      if (st.body.is_document()) {
        if (const Value* p = st.body.find("localField")) {
          if (p->is_string()) add_field(FieldPath::parse(p->as_string()));
        }
        if (const Value* p = st.body.find("foreignField")) {
          if (p->is_string()) add_field(FieldPath::parse(p->as_string()));
        }
        if (const Value* p = st.body.find("let")) walk_expr(*p);
        if (const Value* p = st.body.find("pipeline")) walk_sub_pipeline(*p);
      }
    }
    // $limit/$skip/$count reference no input fields.
  }

  void walk_sub_pipeline(const Value& v) {
    if (!v.is_array()) return;
    for (const auto& elem : v.as_array()) {
      if (!elem.is_document() || elem.as_document().size() != 1) continue;
      const auto& e = elem.as_document()[0];
      if (e.key.empty() || e.key[0] != '$') continue;
      walk_stage(Stage{e.key, e.value, stage_is_supported(e.key)});
    }
  }

  static bool is_flag(const Value& v) {
    return v.is_bool() || v.is_numeric();
  }
};

}  // namespace

std::set<FieldPath> extract_fields(const Pipeline& p) {
  Walker w;
  for (const auto& st : p.stages) w.walk_stage(st);
  return std::move(w.fields);
}

std::set<ValuePredicate> extract_value_predicates(const Pipeline& p) {
  Walker w;
  for (const auto& st : p.stages) w.walk_stage(st);
  return std::move(w.predicates);
}

}  // namespace dromql
