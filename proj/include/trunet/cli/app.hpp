#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace trunet {

// Stable process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,
  kExitData = 2,
  kExitNumerical = 3,
  kExitInferPartial = 4,
  kExitGradcheck = 5,
};

/// Runs one trunet command line. `args` excludes the program name; `env`
/// supplies TRUN_* overrides. Failures print one line to `err`:
///   error[<kind>]: <reason>
/// with kind one of config, data, numerical, infer, gradcheck.
int run_cli(const std::vector<std::string>& args, const std::map<std::string, std::string>& env,
            std::ostream& out, std::ostream& err);

// TRUN_* entries of the process environment.
std::map<std::string, std::string> process_environment();

}  // namespace trunet
