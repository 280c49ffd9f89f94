#include "dromql/json_bridge.hpp"

namespace dromql {

nlohmann::ordered_json value_to_json(const Value& v) {
  using json = nlohmann::ordered_json;
  switch (v.kind()) {
    case Kind::Null: return nullptr;
    case Kind::Bool: return v.as_bool();
    case Kind::Int: return v.as_int();
    case Kind::Float: return v.as_float();
    case Kind::String: return v.as_string();
    case Kind::Date: return json{{"$date", v.as_date().ms}};
    case Kind::ObjectId: return json{{"$oid", v.as_oid().hex}};
    case Kind::Array: {
      json arr = json::array();
      for (const auto& e : v.as_array()) arr.push_back(value_to_json(e));
      return arr;
    }
    case Kind::Document: {
      json obj = json::object();
      for (const auto& e : v.as_document()) obj[e.key] = value_to_json(e.value);
      return obj;
    }
  }
  return nullptr;
}

Value value_from_json(const nlohmann::json& j) {
  if (j.is_null()) return Value(nullptr);
  if (j.is_boolean()) return Value(j.get<bool>());
  if (j.is_number_integer() || j.is_number_unsigned()) return Value(j.get<std::int64_t>());
  if (j.is_number_float()) return Value(j.get<double>());
  if (j.is_string()) return Value(j.get<std::string>());
  if (j.is_array()) {
    Value::Array arr;
    for (const auto& e : j) arr.push_back(value_from_json(e));
    return Value(std::move(arr));
  }
  // object: recognize wrappers
  if (j.size() == 1 && j.contains("$date") && j["$date"].is_number_integer()) {
    return Value(DateMs{j["$date"].get<std::int64_t>()});
  }
  if (j.size() == 1 && j.contains("$oid") && j["$oid"].is_string()) {
    const std::string hex = j["$oid"].get<std::string>();
    if (hex.size() == 24) return Value(Oid{hex});
  }
  Value::Document doc;
  for (const auto& [k, val] : j.items()) {
    doc.push_back(Value::Entry{k, value_from_json(val)});
  }
  return Value(std::move(doc));
}

}  // namespace dromql
