#pragma once

namespace him {

// Full CLI: gen-data | train | eval | infer | composite-demo.
// Exit codes: 0 success, 1 runtime failure, 2 I/O error, 3 config error.
int run_cli(int argc, const char* const* argv);

}  // namespace him
