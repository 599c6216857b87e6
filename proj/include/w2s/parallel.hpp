// OpenMP execution helpers with deterministic reductions.
//
// Sums are accumulated per fixed-size block and the block partials are folded
// in index order, so results are bit-identical for any thread count and equal
// to the Exec::Serial path (same block structure, no pragma). Tests and the
// benchmark target compare the two paths directly.

#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace w2s {

enum class Exec { Serial, Parallel };

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

constexpr std::int64_t kBlock = 2048;

template <class Body>
void parallel_for(std::int64_t n, Body&& body, Exec exec = Exec::Parallel) {
  if (exec == Exec::Serial) {
    for (std::int64_t i = 0; i < n; ++i) body(i);
    return;
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) body(i);
}

// parallel_for whose body may throw: the first exception is captured and
// rethrown after the loop (exceptions must not escape an OpenMP region).
template <class Body>
void parallel_for_trapped(std::int64_t n, Body&& body, Exec exec = Exec::Parallel) {
  std::exception_ptr first;
  std::atomic_flag taken = ATOMIC_FLAG_INIT;
  parallel_for(
      n,
      [&](std::int64_t i) {
        try {
          body(i);
        } catch (...) {
          if (!taken.test_and_set()) first = std::current_exception();
        }
      },
      exec);
  if (first) std::rethrow_exception(first);
}

// Deterministic sum of term(i) for i in [0, n).
template <class Term>
double blocked_sum(std::int64_t n, Term&& term, Exec exec = Exec::Parallel) {
  const std::int64_t nb = (n + kBlock - 1) / kBlock;
  std::vector<double> partial(static_cast<std::size_t>(nb), 0.0);
  auto block_body = [&](std::int64_t b) {
    const std::int64_t lo = b * kBlock;
    const std::int64_t hi = std::min(n, lo + kBlock);
    double s = 0.0;
    for (std::int64_t i = lo; i < hi; ++i) s += term(i);
    partial[static_cast<std::size_t>(b)] = s;
  };
  parallel_for(nb, block_body, exec);
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

// Deterministic accumulation of a `width`-sized vector: body(i, acc) adds
// record i's contribution into acc. `out` must hold `width` zeros on entry.
template <class Body>
void blocked_accumulate(std::int64_t n, std::size_t width, double* out, Body&& body,
                        Exec exec = Exec::Parallel) {
  const std::int64_t nb = (n + kBlock - 1) / kBlock;
  std::vector<double> partial(static_cast<std::size_t>(nb) * width, 0.0);
  auto block_body = [&](std::int64_t b) {
    const std::int64_t lo = b * kBlock;
    const std::int64_t hi = std::min(n, lo + kBlock);
    double* acc = partial.data() + static_cast<std::size_t>(b) * width;
    for (std::int64_t i = lo; i < hi; ++i) body(i, acc);
  };
  parallel_for(nb, block_body, exec);
  for (std::int64_t b = 0; b < nb; ++b) {
    const double* acc = partial.data() + static_cast<std::size_t>(b) * width;
    for (std::size_t j = 0; j < width; ++j) out[j] += acc[j];
  }
}

}  // namespace w2s
