#pragma once

// Command-line front end: synth, train, register, track, eval, jacobian.

#include <iosfwd>
#include <string>
#include <vector>

namespace odereg {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;       // unknown command, bad flag or config key
inline constexpr int kExitValidation = 3;  // unreadable or incompatible inputs
inline constexpr int kExitNumeric = 4;

// args excludes the program name. Output goes to `out`, diagnostics to `err`.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace odereg
