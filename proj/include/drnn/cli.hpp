#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace drnn::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kValidation = 2;
inline constexpr int kIo = 3;
inline constexpr int kNumerical = 4;

// Entry point shared by the drnn executable and the tests. `args` excludes
// the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace drnn::cli
