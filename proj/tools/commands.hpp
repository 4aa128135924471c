#pragma once

namespace dastack::cli {

/// Parses argv and runs one subcommand. Returns the process exit code:
/// 0 on success (including --help), 1 for usage or configuration problems,
/// 2 when training fails numerically.
int run(int argc, char** argv);

}  // namespace dastack::cli
