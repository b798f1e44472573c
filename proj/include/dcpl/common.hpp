#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace dcpl {

// Deterministic counter-based generator (splitmix64). All randomness in the
// library flows through this so results are reproducible across platforms;
// std::uniform_*_distribution is implementation-defined and never used.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // [0, 1) with 53 bits of precision.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Unbiased integer in [0, n) via rejection.
  std::uint64_t uniform_int(std::uint64_t n);

  // Inclusive range [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(uniform_int(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::uint64_t state_;
};

// Kahan compensated accumulator; summation order is the caller's contract.
class KahanSum {
 public:
  void add(double value) {
    double y = value - compensation_;
    double t = sum_ + y;
    compensation_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const { return sum_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

// Runs fn(i) for i in [0, count) on a pool of `threads` workers (0 = hardware
// concurrency). Work is split into contiguous chunks; callers get determinism
// by writing to index-addressed slots.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn);

// Worker count resolution: flag value if > 0, else DCPL_THREADS, else
// hardware concurrency.
int resolve_threads(int flag_value);

// Shortest 17-significant-digit rendering used by every CSV/JSONL writer.
std::string format_double(double value);

std::vector<std::string> split(const std::string& text, char sep);

}  // namespace dcpl
