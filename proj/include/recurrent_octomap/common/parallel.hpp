#pragma once

#include <cstddef>
#include <functional>

namespace rom {

/// Worker count: RECURRENT_OCTOMAP_THREADS if set, otherwise `requested`,
/// otherwise the hardware concurrency. Always >= 1.
std::size_t resolve_thread_count(std::size_t requested = 0);

/// Process-wide default used by library calls that do not take an explicit
/// worker count.
void set_default_thread_count(std::size_t n);
std::size_t default_thread_count();

/// Runs body(i) for i in [0, n) on up to `threads` workers with a static
/// contiguous partition. Results that must be reduced should be written to
/// per-index slots and combined by the caller in index order, which keeps
/// the output independent of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                  std::size_t threads = 0);

}  // namespace rom
