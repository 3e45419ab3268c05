#pragma once

// The invariant suite: twelve numbered checks with pinned tolerances. The
// full level is the acceptance run; quick shrinks sample counts and sizes
// while keeping every gate.

#include <functional>
#include <string>
#include <vector>

#include "vortex/runs.hpp"

namespace vortex {

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string measured;  // what was observed, with the numbers
  std::string gate;      // the pass condition
  double seconds = 0.0;
  std::string error;     // set when the check threw
};

struct CheckInfo {
  int id;
  std::string name;
};

const std::vector<CheckInfo>& invariant_checks();

/// Runs the checks in id order (all when only is empty). on_result fires after each.
std::vector<CheckResult> run_invariant_suite(SuiteLevel level, const std::vector<int>& only = {},
                                             const std::function<void(const CheckResult&)>& on_result = {});

}  // namespace vortex
