#include "pathfair/schema.hpp"

#include "pathfair/common.hpp"
#include "pipeline_schema.hpp"

#include <cmath>

namespace pathfair {

using nlohmann::json;

namespace {

bool has_type(const json& v, const std::string& t) {
  if (t == "object") return v.is_object();
  if (t == "array") return v.is_array();
  if (t == "string") return v.is_string();
  if (t == "boolean") return v.is_boolean();
  if (t == "null") return v.is_null();
  if (t == "number") return v.is_number();
  if (t == "integer") {
    if (v.is_number_integer()) return true;
    if (v.is_number_float()) {
      const double d = v.get<double>();
      return std::isfinite(d) && std::floor(d) == d;
    }
    return false;
  }
  return false;
}

std::string escape_pointer(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out += c;
  }
  return out;
}

class Validator {
 public:
  explicit Validator(const json& root) : root_(root) {}

  void check(const json& s, const json& v, const std::string& path, std::vector<SchemaViolation>& out) const {
    if (s.is_boolean()) {
      if (!s.get<bool>()) out.push_back({path, "value not allowed"});
      return;
    }
    if (!s.is_object()) return;
    if (s.contains("$ref")) {
      check(resolve(s.at("$ref").get<std::string>()), v, path, out);
      return;
    }
    if (s.contains("type")) {
      const json& t = s.at("type");
      bool ok = false;
      if (t.is_string()) ok = has_type(v, t.get<std::string>());
      else
        for (const auto& tt : t) ok = ok || has_type(v, tt.get<std::string>());
      if (!ok) {
        out.push_back({path, "expected type " + t.dump()});
        return;
      }
    }
    if (s.contains("enum")) {
      bool ok = false;
      for (const auto& e : s.at("enum")) ok = ok || e == v;
      if (!ok) out.push_back({path, "value must be one of " + s.at("enum").dump()});
    }
    if (s.contains("const") && s.at("const") != v) out.push_back({path, "value must equal " + s.at("const").dump()});
    if (v.is_number()) {
      const double d = v.get<double>();
      if (s.contains("minimum") && d < s.at("minimum").get<double>())
        out.push_back({path, "must be >= " + s.at("minimum").dump()});
      if (s.contains("maximum") && d > s.at("maximum").get<double>())
        out.push_back({path, "must be <= " + s.at("maximum").dump()});
      if (s.contains("exclusiveMinimum") && d <= s.at("exclusiveMinimum").get<double>())
        out.push_back({path, "must be > " + s.at("exclusiveMinimum").dump()});
      if (s.contains("exclusiveMaximum") && d >= s.at("exclusiveMaximum").get<double>())
        out.push_back({path, "must be < " + s.at("exclusiveMaximum").dump()});
    }
    if (v.is_string() && s.contains("minLength") &&
        v.get<std::string>().size() < s.at("minLength").get<std::size_t>())
      out.push_back({path, "string shorter than " + s.at("minLength").dump()});
    if (v.is_object()) {
      if (s.contains("required"))
        for (const auto& r : s.at("required"))
          if (!v.contains(r.get<std::string>()))
            out.push_back({path, "missing required field '" + r.get<std::string>() + "'"});
      const json* props = s.contains("properties") ? &s.at("properties") : nullptr;
      for (auto it = v.begin(); it != v.end(); ++it) {
        const std::string child = path + "/" + escape_pointer(it.key());
        if (props && props->contains(it.key())) {
          check(props->at(it.key()), it.value(), child, out);
        } else if (s.contains("additionalProperties")) {
          const json& ap = s.at("additionalProperties");
          if (ap.is_boolean() && !ap.get<bool>()) out.push_back({child, "unknown field '" + it.key() + "'"});
          else if (ap.is_object()) check(ap, it.value(), child, out);
        }
      }
    }
    if (v.is_array()) {
      if (s.contains("minItems") && v.size() < s.at("minItems").get<std::size_t>())
        out.push_back({path, "needs at least " + s.at("minItems").dump() + " items"});
      if (s.contains("maxItems") && v.size() > s.at("maxItems").get<std::size_t>())
        out.push_back({path, "allows at most " + s.at("maxItems").dump() + " items"});
      if (s.contains("items"))
        for (std::size_t i = 0; i < v.size(); ++i) check(s.at("items"), v[i], path + "/" + std::to_string(i), out);
    }
    if (s.contains("anyOf")) {
      bool ok = false;
      for (const auto& sub : s.at("anyOf")) {
        std::vector<SchemaViolation> tmp;
        check(sub, v, path, tmp);
        ok = ok || tmp.empty();
      }
      if (!ok) out.push_back({path, "does not match any allowed alternative"});
    }
    if (s.contains("oneOf")) {
      int matches = 0;
      std::vector<SchemaViolation> first;
      for (const auto& sub : s.at("oneOf")) {
        std::vector<SchemaViolation> tmp;
        check(sub, v, path, tmp);
        if (tmp.empty()) ++matches;
        else if (first.empty()) first = tmp;
      }
      if (matches != 1) {
        if (matches == 0 && !first.empty()) out.insert(out.end(), first.begin(), first.end());
        else out.push_back({path, "must match exactly one alternative (matched " + std::to_string(matches) + ")"});
      }
    }
  }

 private:
  const json& resolve(const std::string& ref) const {
    if (ref.rfind("#/", 0) != 0) throw Error(ErrorKind::config, "unsupported schema reference " + ref);
    return root_.at(json::json_pointer(ref.substr(1)));
  }

  const json& root_;
};

}  // namespace

std::vector<SchemaViolation> validate_schema(const json& schema, const json& doc) {
  std::vector<SchemaViolation> out;
  Validator(schema).check(schema, doc, "", out);
  return out;
}

const json& pipeline_schema() {
  static const json schema = json::parse(detail::kPipelineSchema);
  return schema;
}

void validate_pipeline_config(const json& config) {
  const auto violations = validate_schema(pipeline_schema(), config);
  if (violations.empty()) return;
  std::string msg = "pipeline config failed schema validation:";
  for (const auto& v : violations) msg += "\n  " + (v.path.empty() ? std::string("/") : v.path) + ": " + v.message;
  throw Error(ErrorKind::config, msg);
}

}  // namespace pathfair
