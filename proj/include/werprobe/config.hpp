#pragma once

// Precision selection. The production library uses 32-bit values; building
// with WERPROBE_DOUBLE produces the 64-bit test variant. The two variants
// live in distinct inline namespaces so both can be linked into one binary.

#if defined(WERPROBE_DOUBLE)
#define WERPROBE_NAMESPACE_BEGIN \
  namespace werprobe {           \
  inline namespace f64 {
#else
#define WERPROBE_NAMESPACE_BEGIN \
  namespace werprobe {           \
  inline namespace f32 {
#endif
#define WERPROBE_NAMESPACE_END \
  }                            \
  }

WERPROBE_NAMESPACE_BEGIN

#if defined(WERPROBE_DOUBLE)
using Real = double;
inline constexpr bool kDoublePrecision = true;
#else
using Real = float;
inline constexpr bool kDoublePrecision = false;
#endif

WERPROBE_NAMESPACE_END
