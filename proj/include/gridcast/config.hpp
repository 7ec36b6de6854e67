#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>

#include "gridcast/tensor.hpp"

namespace gridcast {

// Flat `key = value` configuration with `#` comments. Every key must belong
// to the schema handed to validate(); unknown keys are rejected.
class RunConfig {
 public:
  RunConfig() = default;

  static RunConfig parse_file(const std::string& path);
  static RunConfig parse_string(const std::string& text);

  void validate(std::span<const std::string_view> known_keys) const;

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  int64_t get_int(const std::string& key, int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace gridcast
