#include "fewview/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace fewview {

namespace {
std::atomic<int> g_thread_limit{0};  // 0 = hardware concurrency
}

void set_thread_limit(int n) { g_thread_limit.store(n < 0 ? 0 : n); }

int thread_limit() {
  int n = g_thread_limit.load();
  if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
  return std::max(1, n);
}

void parallel_chunks(int64_t n, int64_t chunk_size,
                     const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  chunk_size = std::max<int64_t>(1, chunk_size);
  const int64_t n_chunks = (n + chunk_size - 1) / chunk_size;
  const int workers = static_cast<int>(
      std::min<int64_t>(thread_limit(), n_chunks));
  if (workers <= 1) {
    for (int64_t c = 0; c < n_chunks; ++c)
      fn(c * chunk_size, std::min(n, (c + 1) * chunk_size));
    return;
  }
  std::atomic<int64_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      const int64_t c = next.fetch_add(1);
      if (c >= n_chunks) return;
      try {
        fn(c * chunk_size, std::min(n, (c + 1) * chunk_size));
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (int i = 0; i + 1 < workers; ++i) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
  const int64_t chunk = std::max<int64_t>(1, n / (4 * thread_limit()));
  parallel_chunks(n, chunk, [&](int64_t b, int64_t e) {
    for (int64_t i = b; i < e; ++i) fn(i);
  });
}

}  // namespace fewview
