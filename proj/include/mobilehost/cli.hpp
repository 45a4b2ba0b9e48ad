#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mobilehost {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFault = 1;    // remote fault or failed signature check
inline constexpr int kExitUsage = 2;    // bad arguments or refused operation
inline constexpr int kExitIo = 3;       // file, network or bind failure

// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mobilehost
