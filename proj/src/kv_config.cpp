// SPDX-License-Identifier: Apache-2.0
#include "lags/kv_config.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "lags/error.hpp"

namespace lags {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& key, const std::string& text) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(text.c_str(), &end);
  if (end == text.c_str() || *end != '\0' || errno == ERANGE) {
    throw ConfigError("config key '" + key + "': '" + text + "' is not a number");
  }
  return v;
}

long long parse_int(const std::string& key, const std::string& text) {
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(text.c_str(), &end, 10);
  if (end == text.c_str() || *end != '\0' || errno == ERANGE) {
    throw ConfigError("config key '" + key + "': '" + text + "' is not an integer");
  }
  return v;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& origin) {
  KeyValueConfig cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    cfg.values_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::optional<std::string> KeyValueConfig::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::optional<double> KeyValueConfig::get_double(const std::string& key) const {
  const auto s = get_string(key);
  if (!s) return std::nullopt;
  return parse_double(key, *s);
}

std::optional<long long> KeyValueConfig::get_int(const std::string& key) const {
  const auto s = get_string(key);
  if (!s) return std::nullopt;
  return parse_int(key, *s);
}

std::optional<std::vector<long long>> KeyValueConfig::get_int_list(const std::string& key) const {
  const auto s = get_string(key);
  if (!s) return std::nullopt;
  std::vector<long long> out;
  std::istringstream in(*s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_int(key, item));
  }
  return out;
}

std::optional<double> KeyValueConfig::get_ratio(const std::string& key) const {
  const auto lin = get_double(key);
  const auto db = get_double(key + "_db");
  if (lin && db) throw ConfigError("config keys '" + key + "' and '" + key + "_db' are both set");
  if (db) return db_to_linear(*db);
  return lin;
}

std::optional<double> KeyValueConfig::get_power(const std::string& key) const {
  const auto lin = get_double(key);
  const auto dbm = get_double(key + "_dbm");
  if (lin && dbm) throw ConfigError("config keys '" + key + "' and '" + key + "_dbm' are both set");
  if (dbm) return dbm_to_watts(*dbm);
  return lin;
}

std::string KeyValueConfig::to_string() const {
  std::ostringstream out;
  for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
  return out.str();
}

}  // namespace lags
