// SPDX-License-Identifier: Apache-2.0

#include "jigsaw/runtime.hpp"

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace jigsaw {

void tune_allocator() {
#ifdef __GLIBC__
  // Large activations would otherwise be mmap'd and unmapped per step, and
  // the page faults cost more than the arithmetic on small bags.
  mallopt(M_MMAP_THRESHOLD, 1 << 28);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace jigsaw
