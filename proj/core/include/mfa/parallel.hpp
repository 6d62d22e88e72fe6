#pragma once

#include <cstddef>
#include <functional>

namespace mfa {

// Caps internal parallelism. 0 restores the default (hardware concurrency).
void set_num_threads(std::size_t n);
std::size_t num_threads();

// Runs fn(chunk_index, begin, end) over fixed-size chunks of [0, n).
// Chunk boundaries depend only on n and chunk_size, never on the thread
// count, so callers that reduce per-chunk partials in chunk order get
// bit-identical results for any thread count. Threads are only spawned when
// `work_per_item * n` is large enough to pay for them.
void parallel_chunks(std::size_t n, std::size_t chunk_size, double work_per_item,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

inline std::size_t num_chunks(std::size_t n, std::size_t chunk_size) {
  return (n + chunk_size - 1) / chunk_size;
}

}  // namespace mfa
