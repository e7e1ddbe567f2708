#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace contramod {

inline constexpr const char* kVersion = "0.1.0";

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3 };

/// Parses `args` (without the program name) and runs one subcommand:
/// gen, split, select, pretrain, train, finetune, sweep-labels,
/// sweep-unlabeled, eval, report. Settings resolve as defaults < --config
/// file (key=value lines) < command-line flags.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace contramod
