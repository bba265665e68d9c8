#pragma once

#include <string>
#include <vector>

namespace normprop {

/// Entry point behind the `normprop` binary; `args` excludes the program
/// name. Subcommands: prototypes, gen-sbm, split, train, eval, experiment,
/// bench. Returns 0 on success, 1 on usage errors, 2 on data errors.
int cli_main(const std::vector<std::string>& args);

}  // namespace normprop
