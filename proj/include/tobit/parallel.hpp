#pragma once

#include <cstddef>
#include <functional>

namespace tobit::parallel {

// 0 means one worker per hardware thread.
int resolve_threads(int requested);

// Calls fn(i) for i in [0, count) on up to `threads` workers. Every index is
// visited exactly once; the first exception thrown by any call is rethrown.
void for_each(std::size_t count, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace tobit::parallel
