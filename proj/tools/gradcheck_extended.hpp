#pragma once

#include "pfnmt/gradcheck_report.hpp"

namespace pfnmt {

// Runs the gradient-check suite in the long double build of the library.
GradcheckReport run_gradcheck_extended(const GradcheckOptions& options);

}  // namespace pfnmt
