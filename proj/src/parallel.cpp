#include "ecgi/parallel.hpp"

#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ecgi {

int default_thread_count() {
  if (const char* env = std::getenv("ECGI_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

void parallel_for(int n, const std::function<void(int)>& fn, int threads) {
  if (threads <= 0) threads = default_thread_count();
  if (threads > n) threads = n;
  if (n <= 0) return;
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }

  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  workers.reserve(static_cast<size_t>(threads));
  for (int w = 0; w < threads; ++w) {
    workers.emplace_back([&, w]() {
      try {
        for (int i = w; i < n; i += threads) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (std::thread& t : workers) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace ecgi
