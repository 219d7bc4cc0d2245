#pragma once

#include <string>
#include <vector>

namespace subalign {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;

int run_cli(int argc, char** argv);
// Same, with argv[0] omitted.
int run_cli(const std::vector<std::string>& args);

}  // namespace subalign
