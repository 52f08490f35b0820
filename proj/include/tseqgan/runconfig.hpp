#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "tseqgan/metrics.hpp"
#include "tseqgan/training.hpp"

namespace tseqgan::config {

/// Environment variables TSEQGAN_<KEY> (key upper-cased) override the file.
inline constexpr const char* kEnvPrefix = "TSEQGAN_";

enum class KeyType { kInt, kFloat, kOptFloat, kString, kBool };

struct KeySpec {
  std::string key;
  KeyType type;
  std::string default_value;  // as written in a config file
  std::string help;
};

/// Every accepted key of the train config file.
const std::vector<KeySpec>& train_keys();

/// Flat "key = value" lines; '#' starts a comment; values may be quoted.
/// Throws ConfigError with the line number on malformed input or repeats.
std::map<std::string, std::string> parse_flat(const std::string& text, const std::string& source = "<config>");

struct RunConfig {
  train::TrainConfig train;
  std::string positive;
  std::string negative;
  std::string out_dir = "run";
  std::size_t log_every = 100;
  /// Used by the evaluate command.
  metrics::ReportOptions metrics;

  nlohmann::json to_json() const;
  /// Resolved configuration in the config-file syntax.
  std::string to_flat() const;
};

/// defaults < file < environment < overrides. Unknown keys or badly typed
/// values throw ConfigError.
RunConfig resolve(const std::map<std::string, std::string>& file,
                  const std::map<std::string, std::string>& overrides = {}, bool use_env = true);

/// Documented defaults in config-file syntax.
std::string defaults_text();

}  // namespace tseqgan::config
