#pragma once

namespace travag::cli {

/// Entry point behind main(). Exit codes: 0 success, 1 runtime failure
/// (divergence, infeasible calibration, bad input data), 2 usage or config
/// error.
int run(int argc, const char* const* argv);

}  // namespace travag::cli
