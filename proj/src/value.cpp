#include "dromql/value.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

namespace dromql {

std::string_view kind_name(Kind k) {
  switch (k) {
    case Kind::Null: return "null";
    case Kind::Bool: return "bool";
    case Kind::Int: return "int";
    case Kind::Float: return "float";
    case Kind::String: return "string";
    case Kind::Array: return "array";
    case Kind::Document: return "document";
    case Kind::Date: return "date";
    case Kind::ObjectId: return "objectid";
  }
  return "?";
}

double Value::numeric() const {
  return is_int() ? static_cast<double>(as_int()) : as_float();
}

const Value* Value::find(std::string_view key) const {
  if (!is_document()) return nullptr;
  for (const auto& e : as_document()) {
    if (e.key == key) return &e.value;
  }
  return nullptr;
}

Value* Value::find(std::string_view key) {
  if (!is_document()) return nullptr;
  for (auto& e : as_document()) {
    if (e.key == key) return &e.value;
  }
  return nullptr;
}

void Value::set(std::string key, Value v) {
  auto& doc = as_document();
  for (auto& e : doc) {
    if (e.key == key) {
      e.value = std::move(v);
      return;
    }
  }
  doc.push_back(Entry{std::move(key), std::move(v)});
}

Value Value::make_doc(std::initializer_list<std::pair<std::string, Value>> entries) {
  Document d;
  d.reserve(entries.size());
  for (const auto& [k, v] : entries) d.push_back(Entry{k, v});
  return Value(std::move(d));
}

Value Value::make_array(std::initializer_list<Value> items) {
  return Value(Array(items));
}

bool numbers_close(double a, double b, double rel_tol, double abs_tol) {
  const double diff = std::fabs(a - b);
  if (diff <= abs_tol) return true;
  return diff <= rel_tol * std::max(std::fabs(a), std::fabs(b));
}

namespace {

template <typename NumEq>
bool equals_with(const Value& a, const Value& b, NumEq num_eq) {
  if (a.is_numeric() && b.is_numeric()) {
    if (a.is_int() && b.is_int()) return a.as_int() == b.as_int();
    return num_eq(a.numeric(), b.numeric());
  }
  if (a.kind() != b.kind()) return false;
  switch (a.kind()) {
    case Kind::Null: return true;
    case Kind::Bool: return a.as_bool() == b.as_bool();
    case Kind::String: return a.as_string() == b.as_string();
    case Kind::Date: return a.as_date() == b.as_date();
    case Kind::ObjectId: return a.as_oid() == b.as_oid();
    case Kind::Array: {
      const auto& x = a.as_array();
      const auto& y = b.as_array();
      if (x.size() != y.size()) return false;
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (!equals_with(x[i], y[i], num_eq)) return false;
      }
      return true;
    }
    case Kind::Document: {
      const auto& x = a.as_document();
      const auto& y = b.as_document();
      if (x.size() != y.size()) return false;
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i].key != y[i].key) return false;
        if (!equals_with(x[i].value, y[i].value, num_eq)) return false;
      }
      return true;
    }
    default: return false;
  }
}

}  // namespace

bool query_equals(const Value& a, const Value& b) {
  return equals_with(a, b, [](double x, double y) { return x == y; });
}

bool fuzzy_equals(const Value& a, const Value& b) {
  return equals_with(a, b, [](double x, double y) { return numbers_close(x, y); });
}

std::string json_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size() + 2);
  for (unsigned char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (c < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out += static_cast<char>(c);
        }
    }
  }
  return out;
}

namespace {

std::string render_float(double d) {
  if (!std::isfinite(d)) return "null";  // unreachable from parsed input
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), d);
  std::string s(buf, ptr);
  // Keep float-ness through a re-parse.
  if (s.find('.') == std::string::npos && s.find('e') == std::string::npos &&
      s.find('E') == std::string::npos) {
    s += ".0";
  }
  return s;
}

void render_to(const Value& v, std::string& out) {
  switch (v.kind()) {
    case Kind::Null: out += "null"; break;
    case Kind::Bool: out += v.as_bool() ? "true" : "false"; break;
    case Kind::Int: out += std::to_string(v.as_int()); break;
    case Kind::Float: out += render_float(v.as_float()); break;
    case Kind::String:
      out += '"';
      out += json_escape(v.as_string());
      out += '"';
      break;
    case Kind::Date:
      out += "{\"$date\":";
      out += std::to_string(v.as_date().ms);
      out += '}';
      break;
    case Kind::ObjectId:
      out += "{\"$oid\":\"";
      out += v.as_oid().hex;
      out += "\"}";
      break;
    case Kind::Array: {
      out += '[';
      bool first = true;
      for (const auto& e : v.as_array()) {
        if (!first) out += ',';
        first = false;
        render_to(e, out);
      }
      out += ']';
      break;
    }
    case Kind::Document: {
      out += '{';
      bool first = true;
      for (const auto& e : v.as_document()) {
        if (!first) out += ',';
        first = false;
        out += '"';
        out += json_escape(e.key);
        out += "\":";
        render_to(e.value, out);
      }
      out += '}';
      break;
    }
  }
}

void key_to(const Value& v, std::string& out) {
  if (v.is_numeric()) {
    const double d = v.numeric();
    if (std::isfinite(d) && d == std::floor(d) && std::fabs(d) < 9.0e15) {
      out += std::to_string(static_cast<std::int64_t>(d));
      return;
    }
    out += render_float(d);
    return;
  }
  switch (v.kind()) {
    case Kind::Array: {
      out += '[';
      for (const auto& e : v.as_array()) {
        key_to(e, out);
        out += ',';
      }
      out += ']';
      break;
    }
    case Kind::Document: {
      out += '{';
      for (const auto& e : v.as_document()) {
        out += '"';
        out += json_escape(e.key);
        out += "\":";
        key_to(e.value, out);
        out += ',';
      }
      out += '}';
      break;
    }
    default: render_to(v, out);
  }
}

}  // namespace

std::string render_value(const Value& v) {
  std::string out;
  render_to(v, out);
  return out;
}

std::string group_key(const Value& v) {
  std::string out;
  key_to(v, out);
  return out;
}

}  // namespace dromql
