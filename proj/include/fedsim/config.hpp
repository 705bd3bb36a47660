#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedsim/orchestrator.hpp"

namespace fedsim {

/// Configuration error carrying the offending source line (0 when the value
/// came from a command-line override or a resolved default).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, int line, const std::string& message);
  int line() const noexcept { return line_; }

 private:
  int line_;
};

struct ConfigEntry {
  std::string value;
  std::string source;
  int line = 0;
};

/// Parsed key/value document. Keys are dotted (`method.alpha`); a `[section]`
/// header prefixes the keys that follow it. `#` starts a comment.
using ConfigDoc = std::map<std::string, ConfigEntry>;

ConfigDoc parse_config_text(const std::string& text, const std::string& source = "<config>");
ConfigDoc parse_config_file(const std::string& path);

/// Applies `key=value`; throws ConfigError for malformed overrides.
void apply_override(ConfigDoc& doc, const std::string& assignment);

/// Every accepted key.
const std::vector<std::string>& config_keys();

/// Resolves a document into a validated experiment configuration. Unset keys
/// take the method family's defaults.
ExperimentConfig build_config(const ConfigDoc& doc);

/// Sorted `key = value` rendering of every resolved field. Equal configs
/// render identically regardless of the order keys were written in.
std::string canonical_config(const ExperimentConfig& cfg);
/// 64-bit FNV-1a of the canonical rendering, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

/// Shortest decimal string that parses back to the same double.
std::string format_double(double v);

}  // namespace fedsim
