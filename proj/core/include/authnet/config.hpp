#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace authnet {

/// Flat configuration store with dotted keys (`preprocess.T`, `seed`, ...).
///
/// Sources are layered in fixed precedence: built-in defaults, then a config
/// file of `key = value` lines, then `AUTHNET_*` environment variables, then
/// explicit set() calls (the CLI flags). Unknown keys are rejected.
class Config {
 public:
  struct KeySpec {
    std::string key;
    std::string default_value;
    std::string description;
  };

  /// Every recognized key with its default and one-line description.
  static const std::vector<KeySpec>& schema();

  /// Config holding only the schema defaults.
  static Config defaults();

  /// Parses `key = value` lines. '#' starts a comment, blank lines ignored.
  void load_file(const std::filesystem::path& path);

  /// Applies AUTHNET_<KEY> variables, dots mapped to underscores
  /// (AUTHNET_PREPROCESS_T overrides preprocess.T).
  void apply_env();

  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::filesystem::path get_path(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;

  /// Stable hash over every key=value pair (sorted), as fixed-width hex.
  std::string digest() const;
  /// Same, restricted to keys sharing the given prefix.
  std::string digest(const std::string& key_prefix) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace authnet
