#pragma once

namespace relpred {

// Full command-line front end (stats / train / evaluate / inductive /
// failures). Returns the process exit code: 0 success, 1 usage or config
// error, 2 data error, 3 runtime (divergence / checkpoint) error.
int run_cli(int argc, const char* const* argv);

}  // namespace relpred
