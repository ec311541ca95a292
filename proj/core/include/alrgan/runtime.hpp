#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace alrgan {

/// Keeps large tensor buffers on the heap instead of fresh mmap pages. The
/// training loop allocates and frees the same sizes every step, and without
/// this glibc returns them to the kernel each time.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace alrgan
