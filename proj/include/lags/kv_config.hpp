// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lags {

/// Flat `key = value` configuration. Lines starting with `#` are comments,
/// keys are case-sensitive and later assignments override earlier ones.
///
/// Quantities in decibels are accepted under a suffixed key and converted to
/// linear SI units on read: `_db` (ratio), `_dbm` (milliwatt-referenced power).
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValueConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& entries() const { return values_; }

  std::optional<std::string> get_string(const std::string& key) const;
  std::optional<double> get_double(const std::string& key) const;
  std::optional<long long> get_int(const std::string& key) const;
  std::optional<std::vector<long long>> get_int_list(const std::string& key) const;

  /// Linear value of `key`, or of `key_db` (10^(x/10)); both present is an error.
  std::optional<double> get_ratio(const std::string& key) const;
  /// Watts from `key` (W), or from `key_dbm` (10^((x-30)/10)).
  std::optional<double> get_power(const std::string& key) const;

  std::string to_string() const;

 private:
  std::string origin_ = "<string>";
  std::map<std::string, std::string> values_;
};

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

}  // namespace lags
