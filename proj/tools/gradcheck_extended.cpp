// Compiled with PFNMT_EXTENDED_PRECISION: finite differences of a loss in
// 64-bit floats bottom out near 1e-10 absolute, below many true gradient
// entries, so the suite evaluates in long double.

#include "gradcheck_extended.hpp"

#include "pfnmt/gradcheck_suite.hpp"

namespace pfnmt {

GradcheckReport run_gradcheck_extended(const GradcheckOptions& options) { return run_gradcheck_suite(options); }

}  // namespace pfnmt
