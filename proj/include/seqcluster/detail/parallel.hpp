#pragma once

#include <algorithm>
#include <thread>
#include <vector>

namespace seqcluster::kernels {

template <typename Body>
void parallel_rows(std::size_t count, std::size_t min_chunk, Body&& body) {
  const std::size_t max_workers = std::max<std::size_t>(1, num_threads());
  const std::size_t by_size = std::max<std::size_t>(1, count / std::max<std::size_t>(1, min_chunk));
  const std::size_t workers = std::min(max_workers, by_size);
  if (workers <= 1) {
    body(std::size_t{0}, count);
    return;
  }
  const std::size_t chunk = (count + workers - 1) / workers;
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(count, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&body, begin, end] { body(begin, end); });
  }
  body(std::size_t{0}, std::min(count, chunk));
}

}  // namespace seqcluster::kernels
