#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace bcpd::cli {

enum ExitCode : int {
  kRejected = 0,     // detect: null rejected; other commands: success
  kNotRejected = 1,  // detect: null not rejected
  kUsage = 2,        // usage, configuration or file-format error
  kDegenerate = 3,   // input that cannot be analyzed
};

/// Runs one invocation. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bcpd::cli
