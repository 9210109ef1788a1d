#pragma once

#include <iosfwd>

namespace pollenstack::cli {

// Process exit codes shared with scripts driving the tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitInputError = 1,
  kExitConfigError = 2,
  kExitInternalError = 3,
};

// Entry point of the `pollenstack` tool. Subcommands: prep, split, inspect,
// baseline, eval, layer-study.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pollenstack::cli
