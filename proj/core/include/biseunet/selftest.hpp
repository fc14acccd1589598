#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace biseunet {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct SelftestOptions {
  std::uint64_t seed = 42;
  // Test hook: perturbs the computed side of the named check so it must fail.
  std::string inject_fault;
};

std::vector<std::string> selftest_check_names();
std::vector<CheckResult> run_selftest(const SelftestOptions& options = {});
std::string render_selftest_table(const std::vector<CheckResult>& results);

}  // namespace biseunet
