#include "segref/core/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace segref::parallel {

namespace {
std::atomic<std::size_t> g_threads{1};
thread_local bool t_in_worker = false;
}

std::size_t thread_count() noexcept { return g_threads.load(std::memory_order_relaxed); }

void set_thread_count(std::size_t n) noexcept {
  g_threads.store(std::max<std::size_t>(n, 1), std::memory_order_relaxed);
}

void for_each_chunk(std::size_t n, std::size_t grain,
                    const std::function<void(std::size_t, std::size_t)>& body) {
  if (n == 0) return;
  grain = std::max<std::size_t>(grain, 1);
  const std::size_t chunks = (n + grain - 1) / grain;
  // nested calls run inline on the worker that issued them
  const std::size_t workers = t_in_worker ? 1 : std::min(thread_count(), chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) {
      body(c * grain, std::min(n, (c + 1) * grain));
    }
    return;
  }

  // The error surfaced is the one from the lowest failing chunk, as in a
  // serial run; chunks past it are skipped.
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> failed_chunk{chunks};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    t_in_worker = true;
    for (;;) {
      const std::size_t c = next.fetch_add(1, std::memory_order_relaxed);
      if (c >= chunks || c > failed_chunk.load(std::memory_order_relaxed)) break;
      try {
        body(c * grain, std::min(n, (c + 1) * grain));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (c < failed_chunk.load(std::memory_order_relaxed)) {
          failed_chunk.store(c, std::memory_order_relaxed);
          error = std::current_exception();
        }
      }
    }
    t_in_worker = false;
  };

  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(worker);
  worker();
  pool.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace segref::parallel
