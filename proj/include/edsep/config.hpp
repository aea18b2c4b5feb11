#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "edsep/data.hpp"
#include "edsep/denoise.hpp"
#include "edsep/error.hpp"
#include "edsep/sample.hpp"
#include "edsep/sde.hpp"
#include "edsep/train.hpp"

namespace edsep::config {

class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

// Malformed JSON, including duplicate object keys. The message carries the
// 1-based line and column.
class ConfigParseError : public ConfigError {
 public:
  ConfigParseError(const std::string& what, std::size_t line, std::size_t column)
      : ConfigError(what), line_(line), column_(column) {}
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

class UnknownKeyError : public ConfigError {
 public:
  explicit UnknownKeyError(const std::string& key)
      : ConfigError("unknown configuration key '" + key + "'"), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

// Rejects duplicate keys, unlike plain nlohmann::json::parse.
nlohmann::json parse_strict_json(const std::string& text);

struct Paths {
  std::string out_dir = "out";
  std::string checkpoint;
  std::string manifest;
};

// Every section is optional in the file; missing keys keep these defaults.
struct RunConfig {
  std::uint64_t seed = 0;
  int jobs = 1;
  SdeParams sde;
  NetworkConfig model;  // includes the stft section and compression constants
  TrainConfig train;
  SamplerConfig sample;
  data::DatasetSpec data;
  Paths paths;
};

// Defaults, then the file (if given), then each "section.key=value"
// override in order. Values in overrides are parsed as JSON when possible
// and as plain strings otherwise.
RunConfig load_config(const std::optional<std::filesystem::path>& path,
                      const std::vector<std::string>& overrides = {});
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);

// Writes resolved_config.json into `dir`.
void write_resolved_config(const RunConfig& cfg, const std::filesystem::path& dir);

nlohmann::json to_json(const SdeParams& p);
SdeParams sde_from_json(const nlohmann::json& j);
nlohmann::json to_json(const data::DatasetSpec& spec);
data::DatasetSpec dataset_from_json(const nlohmann::json& j);
// The "model" and "stft" sections together describe the network.
nlohmann::json network_to_json(const NetworkConfig& cfg);
NetworkConfig network_from_json(const nlohmann::json& j);

}  // namespace edsep::config
