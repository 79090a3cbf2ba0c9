#pragma once

#include <ostream>

namespace charmem::cli {

// Exit codes: 0 success, 1 domain error (data, config, provider), 2 usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace charmem::cli
