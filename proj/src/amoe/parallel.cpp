#include "amoe/parallel.hpp"

#include <omp.h>

#include <atomic>

namespace amoe {
namespace {

std::atomic<int>& configured() {
  static std::atomic<int> threads{0};
  return threads;
}

}  // namespace

void set_num_threads(int threads) { configured().store(threads < 0 ? 0 : threads); }

int num_threads() {
  const int threads = configured().load();
  return threads > 0 ? threads : omp_get_max_threads();
}

}  // namespace amoe
