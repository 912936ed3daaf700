#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace gradshield::accept {

struct CriterionResult {
  int index = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

// Runs the full verification suite, printing one [PASS]/[FAIL] line per
// criterion to `out`, using work_dir for scratch artifacts.
std::vector<CriterionResult> run_acceptance(const std::filesystem::path& work_dir,
                                            std::ostream& out);

// Convenience wrapper: prints to stdout, returns the count of failures.
int run_acceptance_cli(const std::filesystem::path& work_dir);

}  // namespace gradshield::accept
