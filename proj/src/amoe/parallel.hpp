#pragma once

#include <exception>
#include <mutex>

#include "amoe/types.hpp"

namespace amoe {

// Thread count used by parallel loops; 0 selects the OpenMP default.
void set_num_threads(int threads);
[[nodiscard]] int num_threads();

// Runs body(block, begin, end) over consecutive blocks of `block_size`
// indices covering [0, n). The first exception thrown by any block is
// rethrown on the calling thread.
template <class Body>
void for_each_block(Index n, Index block_size, Body&& body) {
  const Index blocks = (n + block_size - 1) / block_size;
  std::exception_ptr failure;
  std::mutex guard;
#pragma omp parallel for schedule(static) num_threads(num_threads())
  for (Index b = 0; b < blocks; ++b) {
    try {
      const Index begin = b * block_size;
      const Index end = begin + block_size < n ? begin + block_size : n;
      body(b, begin, end);
    } catch (...) {
      const std::lock_guard<std::mutex> lock(guard);
      if (!failure) {
        failure = std::current_exception();
      }
    }
  }
  if (failure) {
    std::rethrow_exception(failure);
  }
}

}  // namespace amoe
