#pragma once

#include <iosfwd>

namespace tag2pix {

/// Exit codes of run_cli.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

/// Entry point of the `tag2pix` tool. Results go to `out`, the resolved
/// configuration, progress and errors to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tag2pix
