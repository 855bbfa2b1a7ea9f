#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace ptr {

/// Runs fn(chunk_begin, chunk_end) over [0, n) in `chunks` fixed slices.
/// The slicing does not depend on the machine, so per-chunk reductions
/// combined in chunk order are deterministic.
template <typename Fn>
void parallel_chunks(std::size_t n, std::size_t chunks, Fn&& fn) {
  chunks = std::max<std::size_t>(1, std::min(chunks, n));
  const std::size_t step = (n + chunks - 1) / chunks;
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (hw == 1 || chunks == 1) {
    for (std::size_t c = 0; c < chunks; ++c) fn(c, std::min(n, c * step), std::min(n, (c + 1) * step));
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(chunks);
  for (std::size_t c = 0; c < chunks; ++c) {
    workers.emplace_back([&, c] { fn(c, std::min(n, c * step), std::min(n, (c + 1) * step)); });
  }
  for (auto& w : workers) w.join();
}

}  // namespace ptr
