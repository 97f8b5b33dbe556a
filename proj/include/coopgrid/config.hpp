#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace coopgrid {

/// Flat `key = value` configuration. One entry per line, `#` starts a comment,
/// list values are comma separated. Malformed input throws ConfigError.
class Config {
 public:
  Config() = default;

  static Config parse(std::string_view text, const std::string& source = "<string>");
  static Config load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const;

  /// Keys not present in `known`; callers decide whether that is an error.
  std::vector<std::string> unknown_keys(const std::vector<std::string_view>& known) const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::string source_ = "<defaults>";
};

}  // namespace coopgrid
