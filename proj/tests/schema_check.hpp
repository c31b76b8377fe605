#pragma once

// Validator for the subset of JSON Schema used by the documents in docs/:
// type, properties, required, additionalProperties (boolean), items, enum,
// minimum, maximum, minItems.

#include <fstream>
#include <json.hpp>
#include <string>

namespace schema_check {

using nlohmann::json;

inline bool has_type(const json& v, const std::string& t) {
  if (t == "object") return v.is_object();
  if (t == "array") return v.is_array();
  if (t == "string") return v.is_string();
  if (t == "integer") return v.is_number_integer();
  if (t == "number") return v.is_number();
  if (t == "boolean") return v.is_boolean();
  if (t == "null") return v.is_null();
  return false;
}

// Returns "" when valid, else a description of the first violation.
inline std::string validate(const json& v, const json& schema, const std::string& path = "$") {
  if (schema.contains("type")) {
    const json& t = schema["type"];
    bool ok = false;
    if (t.is_string()) {
      ok = has_type(v, t.get<std::string>());
    } else {
      for (const auto& s : t) ok = ok || has_type(v, s.get<std::string>());
    }
    if (!ok) return path + ": expected type " + t.dump() + ", got " + v.type_name();
  }
  if (schema.contains("enum")) {
    bool found = false;
    for (const auto& e : schema["enum"]) found = found || e == v;
    if (!found) return path + ": value " + v.dump() + " not in enum";
  }
  if (v.is_number()) {
    if (schema.contains("minimum") && v.get<double>() < schema["minimum"].get<double>()) {
      return path + ": below minimum";
    }
    if (schema.contains("maximum") && v.get<double>() > schema["maximum"].get<double>()) {
      return path + ": above maximum";
    }
  }
  if (v.is_object()) {
    if (schema.contains("required")) {
      for (const auto& r : schema["required"]) {
        if (!v.contains(r.get<std::string>())) return path + ": missing required key " + r.get<std::string>();
      }
    }
    const json props = schema.value("properties", json::object());
    for (const auto& [k, sub] : v.items()) {
      if (props.contains(k)) {
        const std::string err = validate(sub, props[k], path + "." + k);
        if (!err.empty()) return err;
      } else if (schema.contains("additionalProperties")) {
        const json& ap = schema["additionalProperties"];
        if (ap.is_boolean() && !ap.get<bool>()) return path + ": unexpected key " + k;
        if (ap.is_object()) {
          const std::string err = validate(sub, ap, path + "." + k);
          if (!err.empty()) return err;
        }
      }
    }
  }
  if (v.is_array()) {
    if (schema.contains("minItems") && v.size() < schema["minItems"].get<std::size_t>()) {
      return path + ": fewer than minItems";
    }
    if (schema.contains("items")) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        const std::string err = validate(v[i], schema["items"], path + "[" + std::to_string(i) + "]");
        if (!err.empty()) return err;
      }
    }
  }
  return "";
}

inline std::string validate_file(const json& v, const std::string& schema_path) {
  std::ifstream is(schema_path);
  if (!is) return "cannot open schema " + schema_path;
  return validate(v, json::parse(is));
}

}  // namespace schema_check
