#pragma once

namespace r2vr {

// Process exit codes of the command-line tool. Stable contract.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,  // config unreadable, unknown keys, range violations
  kExitStage = 2,   // a stage failed on its inputs
  kExitIo = 3,      // a file could not be read or written
};

}  // namespace r2vr
