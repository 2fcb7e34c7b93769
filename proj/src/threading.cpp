#include "sfd/threading.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "sfd/error.hpp"

namespace sfd {

std::size_t max_threads() {
  const char* env = std::getenv("SFD_THREADS");
  if (env == nullptr || *env == '\0') {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
  }
  std::size_t pos = 0;
  long value = 0;
  try {
    value = std::stol(env, &pos);
  } catch (const std::exception&) {
    throw ConfigError("SFD_THREADS is not a number: " + std::string(env));
  }
  if (pos != std::string(env).size() || value < 1) {
    throw ConfigError("SFD_THREADS must be an integer >= 1, got: " +
                      std::string(env));
  }
  return static_cast<std::size_t>(value);
}

void parallel_for(std::size_t count,
                  const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(max_threads(), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body);
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace sfd
