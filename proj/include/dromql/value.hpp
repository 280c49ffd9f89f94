#pragma once

#include <compare>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace dromql {

enum class Kind { Null, Bool, Int, Float, String, Array, Document, Date, ObjectId };

std::string_view kind_name(Kind k);

// Milliseconds since the Unix epoch.
struct DateMs {
  std::int64_t ms = 0;
  friend bool operator==(const DateMs&, const DateMs&) = default;
  friend auto operator<=>(const DateMs&, const DateMs&) = default;
};

// 24 lowercase hex digits.
struct Oid {
  std::string hex;
  friend bool operator==(const Oid&, const Oid&) = default;
  friend auto operator<=>(const Oid&, const Oid&) = default;
};

// A dynamically typed document value. Documents keep key order; int and
// float are distinct kinds.
class Value {
 public:
  struct Entry;
  using Array = std::vector<Value>;
  using Document = std::vector<Entry>;

  Value() : v_(nullptr) {}
  Value(std::nullptr_t) : v_(nullptr) {}
  Value(bool b) : v_(b) {}
  Value(int i) : v_(static_cast<std::int64_t>(i)) {}
  Value(std::int64_t i) : v_(i) {}
  Value(double d) : v_(d) {}
  Value(const char* s) : v_(std::string(s)) {}
  Value(std::string s) : v_(std::move(s)) {}
  Value(Array a) : v_(std::move(a)) {}
  Value(Document d) : v_(std::move(d)) {}
  Value(DateMs d) : v_(d) {}
  Value(Oid o) : v_(std::move(o)) {}

  Kind kind() const { return static_cast<Kind>(v_.index()); }

  bool is_null() const { return kind() == Kind::Null; }
  bool is_bool() const { return kind() == Kind::Bool; }
  bool is_int() const { return kind() == Kind::Int; }
  bool is_float() const { return kind() == Kind::Float; }
  bool is_numeric() const { return is_int() || is_float(); }
  bool is_string() const { return kind() == Kind::String; }
  bool is_array() const { return kind() == Kind::Array; }
  bool is_document() const { return kind() == Kind::Document; }
  bool is_date() const { return kind() == Kind::Date; }
  bool is_oid() const { return kind() == Kind::ObjectId; }

  bool as_bool() const { return std::get<bool>(v_); }
  std::int64_t as_int() const { return std::get<std::int64_t>(v_); }
  double as_float() const { return std::get<double>(v_); }
  const std::string& as_string() const { return std::get<std::string>(v_); }
  const Array& as_array() const { return std::get<Array>(v_); }
  Array& as_array() { return std::get<Array>(v_); }
  const Document& as_document() const { return std::get<Document>(v_); }
  Document& as_document() { return std::get<Document>(v_); }
  DateMs as_date() const { return std::get<DateMs>(v_); }
  const Oid& as_oid() const { return std::get<Oid>(v_); }

  // Int or float widened to double.
  double numeric() const;

  // Document key lookup; nullptr when absent or not a document.
  const Value* find(std::string_view key) const;
  Value* find(std::string_view key);

  // Document insert-or-replace, preserving the original key position.
  void set(std::string key, Value v);

  static Value make_doc(std::initializer_list<std::pair<std::string, Value>> entries);
  static Value make_array(std::initializer_list<Value> items);

  friend bool operator==(const Value& a, const Value& b) { return a.v_ == b.v_; }
  friend bool operator!=(const Value& a, const Value& b) { return !(a == b); }

 private:
  std::variant<std::nullptr_t, bool, std::int64_t, double, std::string, Array, Document, DateMs,
               Oid>
      v_;
};

struct Value::Entry {
  std::string key;
  Value value;
  friend bool operator==(const Entry& a, const Entry& b) {
    return a.key == b.key && a.value == b.value;
  }
};

// Equality with int/float unified numerically; everything else structural.
bool query_equals(const Value& a, const Value& b);

bool numbers_close(double a, double b, double rel_tol = 1e-6, double abs_tol = 1e-9);

// Like query_equals but numeric comparisons use numbers_close.
bool fuzzy_equals(const Value& a, const Value& b);

// Strict JSON, compact separators, {"$date":ms} / {"$oid":"..."} wrappers.
std::string render_value(const Value& v);

// Canonical grouping key: int and integral float collapse to the same key.
std::string group_key(const Value& v);

std::string json_escape(std::string_view s);

}  // namespace dromql
