#pragma once

// Command-line front end. Every command resolves a RunConfig (defaults, then
// --config, then command flags, then --set), writes it as run_config.json in
// its output directory, and runs deterministically from it.

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace dire::cli {

/// Failure reported as one JSON line on the error stream.
class CliError : public std::runtime_error {
 public:
  CliError(std::string kind, const std::string& message) : std::runtime_error(message), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

inline constexpr const char* kRunConfigName = "run_config.json";

/// Every default. Seeds are null and must be supplied.
nlohmann::json default_config();

/// Sets a dotted key. The key must already exist and the value must keep its type.
void set_key(nlohmann::json& cfg, const std::string& dotted, const nlohmann::json& value);
/// Applies "key=value"; the value is read as JSON, or as a plain string if that fails.
void apply_assignment(nlohmann::json& cfg, const std::string& assignment);
/// Recursively overlays `patch` with the same checks as set_key.
void merge_config(nlohmann::json& cfg, const nlohmann::json& patch, const std::string& prefix = "");

/// Runs one command line. Returns the process exit status.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace dire::cli
