// Command-line front end for the gradshield library.
//
//   gradshield <kind> --config <path> [--seed N] [--out DIR] [--force]
//   gradshield verify
//
// Exit codes: 0 ok, 1 usage, 2 validation, 3 runtime.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

#include <unistd.h>

#include "CLI11.hpp"
#include "gradshield/accept.hpp"
#include "gradshield/common.hpp"
#include "gradshield/config.hpp"
#include "gradshield/experiment.hpp"

namespace fs = std::filesystem;
using namespace gradshield;

namespace {

int run_verify() {
  const fs::path work =
      fs::temp_directory_path() /
      ("gradshield-verify-" + std::to_string(::getpid()));
  const int failures = accept::run_acceptance_cli(work);
  if (failures == 0) {
    std::error_code ec;
    fs::remove_all(work, ec);
    return 0;
  }
  std::cerr << "scratch artifacts kept in " << work.string() << "\n";
  return 3;
}

int run_kind(const std::string& kind_arg, const std::string& config_path,
             bool seed_given, long long seed, const std::string& out_override,
             bool force) {
  harness::ExperimentConfig cfg = config_path.empty()
                                      ? harness::default_config()
                                      : harness::parse_config(config_path);
  if (!kind_arg.empty()) {
    try {
      cfg.set_kind(harness::kind_from_name(kind_arg));
    } catch (const ConfigError& e) {
      std::cerr << "usage error: " << e.what() << "\n";
      return 1;
    }
  }
  if (!cfg.has_kind()) {
    std::cerr << "usage error: no experiment kind given (pass one as the "
                 "positional argument or set 'kind =' in the config)\n";
    return 1;
  }
  if (seed_given) cfg.values["seed"] = format_int(seed);
  if (!out_override.empty()) cfg.values["out"] = out_override;
  harness::validate_config(cfg);

  const harness::RunResult result = harness::run_experiment(cfg, force);
  std::cout << "wrote " << result.files.size() << " files to "
            << result.out_dir.string() << " (config " << result.config_hash
            << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "gradshield: selective-encryption defenses for federated learning — "
      "reconstruction bounds, inversion attacks, and noise scheduling"};
  app.get_formatter()->column_width(28);

  std::string kind_arg;
  std::string config_path;
  std::string out_override;
  long long seed = 0;
  bool force = false;

  app.add_option("kind", kind_arg,
                 "experiment kind (bound-curve | attack-sweep | noise-utility "
                 "| adaptive-train | concentration | descent) or 'verify'");
  CLI::Option* config_opt =
      app.add_option("-c,--config", config_path, "experiment config file")
          ->check(CLI::ExistingFile);
  CLI::Option* seed_opt =
      app.add_option("-s,--seed", seed, "override the master seed");
  app.add_option("-o,--out", out_override, "override the output directory");
  app.add_flag("-f,--force", force, "overwrite an existing run directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (kind_arg == "verify") {
      if (*config_opt) {
        std::cerr << "usage error: 'verify' takes no config\n";
        return 1;
      }
      return run_verify();
    }
    return run_kind(kind_arg, config_path, seed_opt->count() > 0, seed,
                    out_override, force);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const IngestError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
