#pragma once

namespace navtrans {

// Keeps freed tensor buffers inside the process heap instead of returning
// them to the kernel after every tape. Call once at program start; a no-op
// outside glibc.
void tune_allocator();

}  // namespace navtrans
