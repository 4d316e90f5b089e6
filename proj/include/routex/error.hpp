#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include <json.hpp>

namespace routex {

using json = nlohmann::json;

/// Error carrying a stable machine-readable code ("infeasible_prefix",
/// "question_mismatch", ...) plus optional structured details.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message, json details = nullptr)
      : std::runtime_error(message), code_(std::move(code)), details_(std::move(details)) {}

  const std::string& code() const noexcept { return code_; }
  const json& details() const noexcept { return details_; }

  json to_json() const {
    json j = {{"error", code_}, {"message", what()}};
    if (!details_.is_null()) j["details"] = details_;
    return j;
  }

 private:
  std::string code_;
  json details_;
};

}  // namespace routex
