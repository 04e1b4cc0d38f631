#pragma once

#include <string>
#include <vector>

namespace somnus::cli {

// Exit codes, kept distinguishable per failure category:
//   0 success
//   2 usage errors (unknown subcommand, missing/invalid flags)
//   3 configuration errors (schema violations, inconsistent settings)
//   4 data and artifact errors (I/O, format, bounds)
//   5 runtime failures (divergence and other execution errors)
//   1 unexpected internal errors
int run(const std::vector<std::string>& args);

int main(int argc, char** argv);

}  // namespace somnus::cli
