#pragma once

#include <cstddef>
#include <functional>

namespace hetfx {

// 0 means "all hardware threads".
unsigned resolve_threads(unsigned requested) noexcept;

// Runs body(i) for i in [0, n) on up to `threads` workers. Each index is
// processed exactly once; results must be written to per-index slots so the
// outcome does not depend on the thread count. The first exception thrown by
// any body is rethrown after all workers stop.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body);

}  // namespace hetfx
