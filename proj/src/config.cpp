#include "gridcast/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace gridcast {

namespace {

std::string trim(const std::string& s) {
  size_t lo = s.find_first_not_of(" \t\r\n");
  if (lo == std::string::npos) return "";
  size_t hi = s.find_last_not_of(" \t\r\n");
  return s.substr(lo, hi - lo + 1);
}

}  // namespace

RunConfig RunConfig::parse_string(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ValidationError("config line " + std::to_string(lineno) + ": empty key");
    if (cfg.values_.count(key) > 0)
      throw ValidationError("config key '" + key + "' set twice");
    cfg.values_[key] = value;
  }
  return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_string(buf.str());
}

void RunConfig::validate(std::span<const std::string_view> known_keys) const {
  for (const auto& [key, value] : values_) {
    if (std::find(known_keys.begin(), known_keys.end(), key) == known_keys.end())
      throw ValidationError("unknown config key '" + key + "'");
  }
}

int64_t RunConfig::get_int(const std::string& key, int64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t pos = 0;
    int64_t v = std::stoll(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "' is not an integer: " + it->second);
  }
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t pos = 0;
    double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "' is not a number: " + it->second);
  }
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ValidationError("config key '" + key + "' is not a boolean: " + it->second);
}

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

}  // namespace gridcast
