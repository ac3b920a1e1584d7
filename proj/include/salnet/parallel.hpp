#pragma once

#include <cstdint>
#include <functional>

namespace salnet {

// Global cap on worker threads used by the kernels. 1 forces fully serial
// execution. Thread-safe to read; set it once at startup.
void set_max_threads(int n);
int max_threads();

// Runs fn(i) for every i in [0, n), split into contiguous chunks across
// threads. Each index runs exactly once; fn must not throw.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn);

}  // namespace salnet
