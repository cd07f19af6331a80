#pragma once

#include <malloc.h>

namespace quench::detail {

// The samplers and trainer cycle large Eigen temporaries every step. With
// glibc defaults those exceed M_MMAP_THRESHOLD, so each free returns pages
// to the kernel and each allocation faults them back in, which costs more
// than the arithmetic. Raising the thresholds keeps the buffers on the heap
// free list. Idempotent; called from the hot entry points.
inline void tune_allocator() {
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)done;
}

}  // namespace quench::detail
