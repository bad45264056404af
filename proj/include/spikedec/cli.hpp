#pragma once

namespace spikedec {

// Process exit codes, one per error family.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;       // unexpected failure
inline constexpr int kExitConfig = 2;      // bad flags / config / dimensions
inline constexpr int kExitIo = 3;          // unreadable, corrupt or unwritable files
inline constexpr int kExitDivergence = 4;  // non-finite loss during training

// Full command-line entry point; argv[0] is the program name. Catches all
// tool errors and maps them to the exit codes above.
int run_cli(int argc, const char* const* argv);

}  // namespace spikedec
