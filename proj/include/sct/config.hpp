#pragma once

// Layered configuration: JSON file, then SCTLAB_<SECTION>__<KEY> environment
// variables, then explicit section.key=value overrides.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace sct::config {

inline constexpr const char* kEnvPrefix = "SCTLAB_";

/// Throws UsageError when the file is missing or not a JSON object.
nlohmann::json load_file(const std::filesystem::path& path);

/// "a.b.c=value". The value is parsed as JSON when possible, otherwise kept as
/// a string. Throws UsageError on a malformed assignment.
void apply_assignment(nlohmann::json& cfg, const std::string& assignment);

/// Applies every NAME=value in env whose name starts with the prefix;
/// "__" separates path components, which are lower-cased.
void apply_environment(nlohmann::json& cfg, const std::vector<std::string>& env, const std::string& prefix = kEnvPrefix);

/// The process environment as NAME=value strings.
std::vector<std::string> process_environment();

/// File, then environment, then assignments.
nlohmann::json resolve(const std::filesystem::path& path, const std::vector<std::string>& assignments);

}  // namespace sct::config
