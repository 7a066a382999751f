#pragma once

#include <json.hpp>

#include <string>
#include <vector>

namespace pathfair {

struct SchemaViolation {
  std::string path;  // JSON pointer of the offending value
  std::string message;
};

/// Validates `doc` against a JSON Schema using the keywords type, enum, const,
/// properties, required, additionalProperties, items, minItems, maxItems,
/// minimum, maximum, exclusiveMinimum, exclusiveMaximum, minLength, anyOf, oneOf
/// and local $ref into "$defs". Unknown keywords are ignored.
std::vector<SchemaViolation> validate_schema(const nlohmann::json& schema, const nlohmann::json& doc);

/// Schema of the pipeline configuration.
const nlohmann::json& pipeline_schema();

/// Throws ErrorKind::config listing the violations.
void validate_pipeline_config(const nlohmann::json& config);

}  // namespace pathfair
