#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "kubm/flowcodec.hpp"
#include "kubm/koopman.hpp"
#include "kubm/planner.hpp"
#include "kubm/synthbench.hpp"

namespace kubm {

struct ConfigKey {
  std::string key;
  std::string default_value;
  std::string doc;
};

/// Every recognised key with its default.
const std::vector<ConfigKey>& config_keys();

/// Flat key/value settings. Files hold `key = value` lines; `#` starts a comment.
class Config {
 public:
  Config();

  /// Throws InvalidArgument for an unknown key.
  void set(const std::string& key, const std::string& value);
  void load_file(const std::filesystem::path& path);
  void parse(std::istream& in, const std::string& source = "<config>");

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  long get_int(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::size_t> get_list(const std::string& key) const;

  /// Effective settings, one `key = value` per line in key order.
  std::string dump() const;
  void write_effective(const std::filesystem::path& dir) const;

  TrainConfig train_config() const;
  FlowTrainConfig flow_config() const;
  EnvConfig env_config() const;
  TriggerPolicy trigger_policy() const;
  EdmdOptions edmd_options() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace kubm
