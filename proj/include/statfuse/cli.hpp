#pragma once

namespace statfuse {

/// Batch front door. Exit codes: 0 success, 1 configuration or data error,
/// 2 numerical failure (non-convergence, infeasibility).
int run_cli(int argc, const char* const* argv);

}  // namespace statfuse
