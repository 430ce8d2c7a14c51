#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace choicematch {

enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitUsage = 2, kExitConfig = 3 };

inline constexpr const char* kCommands[] = {"forge-data", "pretrain", "meta-train",
                                            "eval", "zero-shot-eval", "selftest"};

/// Runs one pipeline command. Artifacts go to the configured results
/// directory, each named "<command>-<config hash>.<kind>", alongside a
/// manifest. Progress goes to `out`, diagnostics to `err`.
int run(const std::string& command, const std::string& config_path,
        const std::vector<std::string>& overrides, std::size_t workers, std::ostream& out,
        std::ostream& err);

/// argv front end: <command> [config] [--set key=value]... [--workers N]
int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace choicematch
