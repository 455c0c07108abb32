#pragma once

namespace vgamba {

// Entry point for the command-line tool. Returns the process exit code:
// 0 success, 2 configuration problems, 1 anything else.
int run_cli(int argc, char** argv);

}  // namespace vgamba
