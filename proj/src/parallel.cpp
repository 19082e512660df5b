#include "ergodic_bem/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "ergodic_bem/common.hpp"

namespace ergodic_bem {

std::size_t resolve_workers(std::optional<long> requested) {
  long value = 0;
  if (requested && *requested > 0) {
    value = *requested;
  } else {
    if (const char* env = std::getenv("ERGODIC_BEM_WORKERS")) {
      const std::string s(env);
      if (!s.empty() && s != "auto") {
        try {
          value = std::stol(s);
        } catch (const std::exception&) {
          throw ConfigError("ERGODIC_BEM_WORKERS must be a positive integer or \"auto\"");
        }
        if (value <= 0) {
          throw ConfigError("ERGODIC_BEM_WORKERS must be a positive integer or \"auto\"");
        }
      }
    }
  }
  if (value <= 0) {
    const unsigned hc = std::thread::hardware_concurrency();
    value = hc > 0 ? static_cast<long>(hc) : 1;
  }
  return static_cast<std::size_t>(value);
}

void parallel_blocks(std::size_t n_items, std::size_t block_size, std::size_t workers,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  if (n_items == 0) return;
  if (block_size == 0) block_size = 1;
  const std::size_t blocks = block_count(n_items, block_size);
  if (workers <= 1 || blocks == 1) {
    for (std::size_t b = 0; b < blocks; ++b) {
      const std::size_t begin = b * block_size;
      const std::size_t end = std::min(n_items, begin + block_size);
      fn(b, begin, end);
    }
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&]() {
    while (true) {
      const std::size_t b = next.fetch_add(1);
      if (b >= blocks) return;
      const std::size_t begin = b * block_size;
      const std::size_t end = std::min(n_items, begin + block_size);
      try {
        fn(b, begin, end);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  std::vector<std::thread> pool;
  const std::size_t n_threads = std::min(workers, blocks);
  pool.reserve(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace ergodic_bem
