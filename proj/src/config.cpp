#include "sct/config.hpp"

#include <algorithm>
#include <cctype>

#include "sct/error.hpp"
#include "sct/io.hpp"

extern char** environ;

namespace sct::config {

using nlohmann::json;

json load_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw UsageError("config file " + path.string() + " not found");
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    throw UsageError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw UsageError("config file " + path.string() + " must contain a JSON object");
  return j;
}

namespace {

void assign_path(json& cfg, const std::vector<std::string>& keys, const std::string& raw, const std::string& origin) {
  json* node = &cfg;
  for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
    json& next = (*node)[keys[i]];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) throw UsageError(origin + ": '" + keys[i] + "' is not a section");
    node = &next;
  }
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  (*node)[keys.back()] = value;
}

std::vector<std::string> split(const std::string& s, const std::string& sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t at = s.find(sep, pos);
    out.push_back(s.substr(pos, at == std::string::npos ? std::string::npos : at - pos));
    if (at == std::string::npos) break;
    pos = at + sep.size();
  }
  return out;
}

}  // namespace

void apply_assignment(json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("override '" + assignment + "' must look like key=value");
  const auto keys = split(assignment.substr(0, eq), ".");
  for (const auto& k : keys)
    if (k.empty()) throw UsageError("override '" + assignment + "' has an empty key component");
  assign_path(cfg, keys, assignment.substr(eq + 1), "override '" + assignment + "'");
}

void apply_environment(json& cfg, const std::vector<std::string>& env, const std::string& prefix) {
  for (const auto& entry : env) {
    if (entry.rfind(prefix, 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string name = entry.substr(prefix.size(), eq - prefix.size());
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
    auto keys = split(name, "__");
    if (std::any_of(keys.begin(), keys.end(), [](const std::string& k) { return k.empty(); }))
      throw UsageError("malformed environment override " + entry.substr(0, eq));
    assign_path(cfg, keys, entry.substr(eq + 1), "environment variable " + entry.substr(0, eq));
  }
}

std::vector<std::string> process_environment() {
  std::vector<std::string> out;
  for (char** e = environ; e && *e; ++e) out.emplace_back(*e);
  return out;
}

json resolve(const std::filesystem::path& path, const std::vector<std::string>& assignments) {
  json cfg = load_file(path);
  apply_environment(cfg, process_environment());
  for (const auto& a : assignments) apply_assignment(cfg, a);
  return cfg;
}

}  // namespace sct::config
