// Standalone runner for the acceptance suite: prints one pass/fail line per
// criterion and exits nonzero when any criterion fails.

#include <filesystem>

#include "gradshield/accept.hpp"

int main(int argc, char** argv) {
  const std::filesystem::path work =
      argc > 1 ? std::filesystem::path(argv[1])
               : std::filesystem::path("accept-scratch");
  return gradshield::accept::run_acceptance_cli(work) == 0 ? 0 : 1;
}
