#pragma once

namespace omni {

// Full command-line surface: generate-data | train | eval | ablate.
// Returns the process exit code: 0 success, 1 usage or internal error,
// 2 configuration error, 3 missing prerequisite, 4 numerical abort.
int run_cli(int argc, char** argv);

}  // namespace omni
