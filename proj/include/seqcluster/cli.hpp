#pragma once
// Command-line front end as a library call so tests can drive it in-process.
//
//   seqcluster synth | pretrain | refine | evaluate | export-embeddings
//
// Exit codes: 0 success, 2 config/usage, 3 numeric failure, 4 I/O.

#include <ostream>
#include <string>
#include <vector>

namespace seqcluster {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitIo = 4;

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace seqcluster
