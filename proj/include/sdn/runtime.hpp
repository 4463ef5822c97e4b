#pragma once

namespace sdn {

/// Keeps freed large blocks in the heap instead of returning them to the OS.
/// The tape allocates and frees megabyte-sized matrices on every pass; without
/// this each allocation pays fresh page faults. No-op outside glibc.
void tune_allocator();

} // namespace sdn
