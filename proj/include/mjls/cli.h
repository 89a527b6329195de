#pragma once

#include <iosfwd>

namespace mjls {

// Exit codes: 0 success, 1 solver failure, 2 configuration or usage error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitSolver = 1;
inline constexpr int kExitConfig = 2;

// Runs one subcommand. The JSON report goes to `out`, diagnostics to `err`.
int RunCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mjls
