#pragma once

// Scalar type of every tensor. Extended builds (PFNMT_EXTENDED_PRECISION)
// use long double; they live in their own inline namespace so a single
// program can link both.

#if defined(PFNMT_EXTENDED_PRECISION)
#define PFNMT_PRECISION_NS x80
#else
#define PFNMT_PRECISION_NS f64
#endif

namespace pfnmt {
inline namespace PFNMT_PRECISION_NS {

#if defined(PFNMT_EXTENDED_PRECISION)
using Real = long double;
#else
using Real = double;
#endif

}  // namespace PFNMT_PRECISION_NS
}  // namespace pfnmt
