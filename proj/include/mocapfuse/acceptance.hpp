#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace mocapfuse {

struct CriterionResult {
  int id = 0;
  std::string title;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;  // includes shared runs this criterion triggered first
  double budget_s = 0.0;
};

struct AcceptanceOptions {
  std::uint64_t seed = 1;
  int workers = 0;        // batch thread pool, 0 = hardware concurrency
  std::vector<int> only;  // empty runs all ten
};

/// Runs the acceptance criteria in id order. `on_result` fires as each one finishes.
std::vector<CriterionResult> run_acceptance(
    const AcceptanceOptions& opts,
    const std::function<void(const CriterionResult&)>& on_result = {});

/// "PASS  4  square-root stability: ... (12.3 s)"
std::string format_result(const CriterionResult& r);

}  // namespace mocapfuse
