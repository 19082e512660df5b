#pragma once

#include <cstddef>
#include <functional>
#include <optional>

namespace ergodic_bem {

// Resolves the worker count: explicit request > ERGODIC_BEM_WORKERS env var >
// hardware concurrency. Always at least 1.
std::size_t resolve_workers(std::optional<long> requested = std::nullopt);

// Runs fn(block_index, begin, end) over [0, n_items) split into fixed-size blocks.
// Blocks are claimed dynamically by the pool, but the block layout depends only on
// block_size, never on the worker count; callers that merge per-block results in
// block order therefore get worker-count-independent output.
void parallel_blocks(std::size_t n_items, std::size_t block_size, std::size_t workers,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

inline std::size_t block_count(std::size_t n_items, std::size_t block_size) {
  return (n_items + block_size - 1) / block_size;
}

}  // namespace ergodic_bem
