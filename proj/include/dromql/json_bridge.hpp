#pragma once

#include <nlohmann/json.hpp>

#include "dromql/value.hpp"

namespace dromql {

// Extended-JSON view of a Value ({"$date":ms}, {"$oid":"..."} wrappers).
nlohmann::ordered_json value_to_json(const Value& v);

Value value_from_json(const nlohmann::json& j);

}  // namespace dromql
