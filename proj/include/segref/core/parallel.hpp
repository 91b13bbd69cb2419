#pragma once

#include <cstddef>
#include <functional>

namespace segref::parallel {

/// Worker count used by library kernels. Defaults to 1; the CLI sets it from
/// --threads or SEGREF_THREADS.
std::size_t thread_count() noexcept;
void set_thread_count(std::size_t n) noexcept;

/// Calls body(begin, end) over contiguous chunks of [0, n), at most
/// thread_count() of them at once. Chunk boundaries depend only on n and
/// grain, never on the worker count, so per-element results cannot depend on
/// how many threads ran. The exception of the lowest failing chunk is
/// rethrown on the caller. Calls made from inside a body run serially.
void for_each_chunk(std::size_t n, std::size_t grain,
                    const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace segref::parallel
