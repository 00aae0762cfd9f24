#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace mpmflow {

/// Splits [0, n) into `chunks` contiguous ranges of near-equal size.
/// The split depends only on n and chunks, never on scheduling.
inline std::pair<std::size_t, std::size_t> chunk_range(std::size_t n, std::size_t chunks, std::size_t c) {
  const std::size_t base = n / chunks, extra = n % chunks;
  const std::size_t begin = c * base + std::min(c, extra);
  return {begin, begin + base + (c < extra ? 1 : 0)};
}

/// Runs fn(chunk, begin, end) for each chunk, one thread per chunk.
/// With threads <= 1 everything runs inline on the caller. If several chunks
/// throw, the exception of the lowest-numbered chunk is rethrown.
template <class Fn>
void parallel_chunks(std::size_t n, int threads, Fn&& fn) {
  const std::size_t chunks = static_cast<std::size_t>(std::max(1, threads));
  if (chunks == 1 || n < 2) {
    fn(std::size_t{0}, std::size_t{0}, n);
    return;
  }
  std::vector<std::exception_ptr> errors(chunks);
  {
    std::vector<std::jthread> workers;
    workers.reserve(chunks);
    for (std::size_t c = 0; c < chunks; ++c) {
      workers.emplace_back([&, c] {
        try {
          const auto [b, e] = chunk_range(n, chunks, c);
          fn(c, b, e);
        } catch (...) {
          errors[c] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace mpmflow
