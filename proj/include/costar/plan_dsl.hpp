#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "costar/btree.hpp"

namespace costar {

struct SourceSpan {
  std::size_t line = 1;    // 1-based
  std::size_t column = 1;  // 1-based, in bytes
  std::size_t offset = 0;
  std::size_t length = 0;
};

/// A syntax error with the location it was detected at.
class PlanSyntaxError : public Error {
 public:
  PlanSyntaxError(const std::string& message, SourceSpan span)
      : Error(ErrorCode::SyntaxError, std::to_string(span.line) + ":" + std::to_string(span.column) +
                                          ": " + message),
        span_(span), detail_(message) {}

  const SourceSpan& span() const noexcept { return span_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  SourceSpan span_;
  std::string detail_;
};

struct PlanDocument {
  std::string name;
  BTNode tree;  // always a Root node with path ids
  std::map<std::string, SourceSpan> spans;  // node id -> source extent, empty unless parsed
};

/// Throws PlanSyntaxError.
PlanDocument parsePlan(std::string_view text);

/// Canonical text: two-space indentation, parameters sorted by key.
std::string serializePlan(const PlanDocument& doc);

nlohmann::json planToJson(const PlanDocument& doc);
nlohmann::json nodeToJson(const BTNode& node);
/// Throws Error(MalformedTree) on schema violations.
PlanDocument planFromJson(const nlohmann::json& j);
BTNode nodeFromJson(const nlohmann::json& j);

nlohmann::json paramToJson(const ParamValue& v);
ParamValue paramFromJson(const nlohmann::json& j);

/// Parses a plan file, detecting JSON by a leading '{'.
PlanDocument loadPlanFile(const std::string& path);

}  // namespace costar
