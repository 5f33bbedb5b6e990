// SPDX-License-Identifier: Apache-2.0

#include "moelab/threading.hpp"

#include <atomic>

namespace moelab {

namespace {
std::atomic<std::size_t> g_max_threads{0};
}

void set_max_threads(std::size_t n) { g_max_threads.store(n == 0 ? 1 : n); }

std::size_t max_threads() {
  std::size_t n = g_max_threads.load();
  if (n == 0) {
    n = std::thread::hardware_concurrency();
    if (n == 0) n = 1;
  }
  return n;
}

}  // namespace moelab
