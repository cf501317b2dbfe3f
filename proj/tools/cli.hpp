#pragma once

#include <ostream>

#include "grogu/error.hpp"

namespace grogu::cli {

// Exit codes: 0 success, 2 missing input, 3 backend/transport failure,
// 4 validation or configuration failure.
int exit_code_for(ErrorKind kind);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace grogu::cli
