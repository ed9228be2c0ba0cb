#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace fairsample {

enum class ErrorKind {
  invalid_argument,
  size_limit,
  gauge,
  dimension_mismatch,
  degenerate_driver,
  tolerance,
  nontrivial_first_order,
  mixed_degeneracy,
  config,
  io,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::size_limit: return "size_limit";
    case ErrorKind::gauge: return "gauge";
    case ErrorKind::dimension_mismatch: return "dimension_mismatch";
    case ErrorKind::degenerate_driver: return "degenerate_driver";
    case ErrorKind::tolerance: return "tolerance";
    case ErrorKind::nontrivial_first_order: return "nontrivial_first_order";
    case ErrorKind::mixed_degeneracy: return "mixed_degeneracy";
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

using Word = std::uint64_t;

inline int popcount(Word w) { return std::popcount(w); }
inline int hamming(Word a, Word b) { return std::popcount(a ^ b); }
inline Word low_mask(int n) { return n >= 64 ? ~Word{0} : (Word{1} << n) - 1; }

// splitmix64 finalizer; used to derive independent per-task seeds from a master seed.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return mix64(mix64(master) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
  return derive_seed(derive_seed(master, a), b);
}

// Binomial coefficient saturating at max uint64.
inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    r = r * (n - k + i) / i;
    if (r > std::numeric_limits<std::uint64_t>::max()) return std::numeric_limits<std::uint64_t>::max();
  }
  return static_cast<std::uint64_t>(r);
}

// All words over n bits with popcount == weight, ascending (Gosper's hack).
inline std::vector<Word> words_with_weight(int n, int weight) {
  std::vector<Word> out;
  if (weight < 0 || weight > n) return out;
  if (weight == 0) {
    out.push_back(0);
    return out;
  }
  const Word limit = low_mask(n);
  Word w = low_mask(weight);
  while (true) {
    out.push_back(w);
    const Word c = w & (~w + 1);
    const Word r = w + c;
    if (r == 0 || r > limit) break;
    w = (((r ^ w) >> 2) / c) | r;
    if (w > limit) break;
  }
  return out;
}

/// Runs fn(i) for i in [0, count) over the available hardware threads. fn must only
/// write to per-index state; results are therefore independent of the thread count.
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn, unsigned max_threads = 0) {
  unsigned threads = max_threads ? max_threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < count; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace fairsample
