#pragma once

// The libraries build in two scalar modes: float for production and double
// for the tight finite-difference tolerances of the gradient-check tests.
// Each mode lives in its own inline namespace so that a test binary can link
// both builds side by side without symbol clashes.
#ifdef NDGRAD_REAL64
#define NDGRAD_ABI_NS f64
#else
#define NDGRAD_ABI_NS f32
#endif

#define NDGRAD_NS_BEGIN inline namespace NDGRAD_ABI_NS {
#define NDGRAD_NS_END }

namespace ndgrad {
NDGRAD_NS_BEGIN

#ifdef NDGRAD_REAL64
using real = double;
#else
using real = float;
#endif

NDGRAD_NS_END
}  // namespace ndgrad
