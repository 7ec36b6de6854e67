#pragma once

#include <string>
#include <vector>

namespace gridcast {

struct CheckResult {
  std::string name;
  double max_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

// Finite-difference and dense-oracle verification on small shapes. When
// perturb names a check, that kernel's output is deliberately corrupted so
// the failure path stays honest.
std::vector<CheckResult> run_selfcheck(const std::string& perturb = "");

std::string format_selfcheck(const std::vector<CheckResult>& results);

}  // namespace gridcast
