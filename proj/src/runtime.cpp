#include "navtrans/runtime.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace navtrans {

void tune_allocator() {
#if defined(__GLIBC__)
  // Tapes allocate and release many buffers above the default 128 KiB mmap
  // threshold; serving them from the heap avoids a page-fault storm.
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 256 << 20);
#endif
}

}  // namespace navtrans
