#pragma once

#include <iosfwd>

namespace gcp::cli {

enum ExitCode { kOk = 0, kDataFailure = 1, kBackendFailure = 2 };

// Entry point of the gcpforge binary. Progress and summaries go to `out`;
// failures print one JSON line {"error", "category", "message"} to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gcp::cli
