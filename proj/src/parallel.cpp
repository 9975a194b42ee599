#include "metsyn/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace metsyn {

namespace {
std::atomic<std::size_t> g_max_threads{1};
}

void set_max_threads(std::size_t n) { g_max_threads = std::max<std::size_t>(1, n); }

std::size_t max_threads() { return g_max_threads; }

void parallel_for(std::size_t n, const std::function<void(std::size_t)> &fn) {
  const std::size_t workers = std::min(max_threads(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  for (auto &t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

} // namespace metsyn
