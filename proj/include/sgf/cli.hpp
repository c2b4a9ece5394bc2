#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "sgf/error.hpp"

namespace sgf::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,     // bad flags, unknown scheme/arch/profile names
    kData = 2,      // unreadable or malformed inputs, checkpoint problems
    kInternal = 3,  // invariant violations and unexpected failures
};

/// Process exit code reported for a library error.
int exit_code_for(ErrorCode code);

/// Runs one command line (without the program name). Normal output goes to
/// `out`, diagnostics to `err`; returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main(int argc, char** argv);

}  // namespace sgf::cli
