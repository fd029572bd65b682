#ifndef PCFMEM_CLI_HPP_
#define PCFMEM_CLI_HPP_

namespace pcfmem {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

// Parses argv, runs one pipeline stage and maps failures to exit codes.
int run_cli(int argc, char** argv);

}  // namespace pcfmem

#endif  // PCFMEM_CLI_HPP_
