#pragma once

namespace navlab::cli {

// Subcommand dispatch. Exit code 0 on success, 1 on input/usage errors,
// 2 on runtime faults.
int run(int argc, char** argv);

}  // namespace navlab::cli
