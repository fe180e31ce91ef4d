#pragma once

#include <cstddef>
#include <functional>

namespace abstain {

/// Worker count: ABSTAIN_THREADS if set, else the hardware concurrency.
std::size_t default_thread_count();

/// Calls body(i) for every i in [0, n) across up to `threads` workers. Each
/// index is handled exactly once, so results written to slot i do not depend
/// on scheduling. The first exception thrown by any call is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                  std::size_t threads = default_thread_count());

}  // namespace abstain
