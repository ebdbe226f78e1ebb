#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace ocpg {

struct VerifyOptions {
  std::vector<std::string> only;  // empty: every suite
  bool flip_beta_term = false;    // corrupt the exact gradients on purpose
  std::uint64_t seed = 0;         // offsets every instance seed
  std::size_t consistency_samples = 100000;
};

struct SuiteResult {
  std::string name;
  std::string check;        // what is compared, in words
  int instances = 0;
  double worst = 0.0;       // largest error (or z-score) observed
  double tolerance = 0.0;
  bool passed = true;
  std::string failure;      // first offending instance
  double occupancy_worst = 0.0;  // kernel suite: worst occupancy fixed-point residual
  double seconds = 0.0;
};

/// gradient-check, hierarchical, reduction, coagent, kernel, consistency.
const std::vector<std::string>& suite_names();

/// Throws std::invalid_argument for an unknown suite name in `only`.
std::vector<SuiteResult> run_verify(const VerifyOptions& opts);

void print_verify_table(std::ostream& os, const std::vector<SuiteResult>& results);

}  // namespace ocpg
