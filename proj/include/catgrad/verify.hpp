#pragma once

#include "catgrad/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace catgrad {

struct VerifyOptions {
  std::uint64_t seed = 2024;
  int identity_instances = 200;
  int quadratic_instances = 100;
  // Testing hook: perturbs the ReinMax expectation so the second-order check
  // must fail and name the offending instance.
  bool corrupt_reinmax = false;
};

struct CheckResult {
  std::string name;
  bool passed = false;
  double max_residual = 0.0;
  double tolerance = 0.0;
  int instances = 0;
  std::string detail;  // worst / failing instance for replay
};

struct VerifyReport {
  std::uint64_t seed = 0;
  std::vector<CheckResult> checks;
  bool all_passed = true;

  std::string to_text() const;
  std::string to_json() const;
};

// Runs every identity and property check on seeded random instances.
VerifyReport run_verify(const VerifyOptions& opts = {});

}  // namespace catgrad
