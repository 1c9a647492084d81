#pragma once

#include <string>
#include <vector>

namespace tpl {

// Exit codes: 0 success, 1 validation error, 2 numerical failure.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args); // args[0] is the program name

// Default output directory when neither --out nor the config sets one.
constexpr const char* kOutDirEnv = "TPL_OUT_DIR";

} // namespace tpl
