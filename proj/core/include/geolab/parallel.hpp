#pragma once

#include <cstddef>
#include <functional>

namespace geolab {

/// Resolve a worker count: explicit request wins, then GEOLAB_THREADS, then 1.
unsigned resolve_threads(unsigned requested);

/// Run body(i) for i in [0, n) on up to `threads` workers.
///
/// Work is split into contiguous index blocks. Callers write results into
/// per-index slots and reduce afterwards in index order, which keeps output
/// independent of the thread count.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body);

}  // namespace geolab
