#pragma once

namespace cxr {

// Entry point behind the cxr binary; returns the process exit code
// (0 success, 1 validation, 2 I/O, 3 numerical failure).
int cli_main(int argc, char** argv);

}  // namespace cxr
