#include "dcpl/common.hpp"

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <thread>

namespace dcpl {

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  if (n == 0) return 0;
  std::uint64_t limit = ~0ULL - ~0ULL % n;
  std::uint64_t value;
  do {
    value = next_u64();
  } while (value >= limit);
  return value % n;
}

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
  int workers = resolve_threads(threads);
  if (workers < 1) workers = 1;
  if (count == 0) return;
  if (workers == 1 || count == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::size_t n_workers = std::min<std::size_t>(static_cast<std::size_t>(workers), count);
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(n_workers);
  pool.reserve(n_workers);
  for (std::size_t w = 0; w < n_workers; ++w) {
    pool.emplace_back([&, w] {
      std::size_t lo = count * w / n_workers;
      std::size_t hi = count * (w + 1) / n_workers;
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

int resolve_threads(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("DCPL_THREADS")) {
    int parsed = std::atoi(env);
    if (parsed > 0) return parsed;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

std::string format_double(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = text.find(sep, start);
    if (pos == std::string::npos) {
      parts.push_back(text.substr(start));
      break;
    }
    parts.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
  return parts;
}

}  // namespace dcpl
