#pragma once

#include <cstdint>
#include <functional>

namespace fewview {

// Process-wide worker cap, set once from the CLI --threads flag.
void set_thread_limit(int n);
int thread_limit();

// Runs fn(chunk_begin, chunk_end) over [0, n) split into fixed-size chunks.
// Chunk boundaries depend only on n and chunk_size, never on the worker
// count, so any per-chunk output is bitwise reproducible across --threads
// settings. fn must write only to chunk-local or per-index state.
void parallel_chunks(int64_t n, int64_t chunk_size,
                     const std::function<void(int64_t, int64_t)>& fn);

// Convenience: parallel loop over indices with chunking hidden.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

}  // namespace fewview
