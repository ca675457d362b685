#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

// Data-parallel kernels used by the hot scans (anchor search, torque sweeps,
// feature batches, per-tick metrics). Every parallel entry point has a serial
// twin in agile::par::serial with identical semantics; tests compare the two
// and the benchmark target times them against each other.
//
// Determinism contract: map writes disjoint slots of a preallocated range, so
// results never depend on thread count. arg_best requires `better` to be a
// strict total order over indices; the winner is then unique and the parallel
// reduction lands on it regardless of scheduling. Sums are done as map into a
// buffer plus serial accumulation by the caller.
namespace agile::par {

inline bool openmp_enabled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

template <class Fn>
void for_index(std::ptrdiff_t n, Fn&& fn) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) fn(i);
#else
  for (std::ptrdiff_t i = 0; i < n; ++i) fn(i);
#endif
}

// Index of the best element under `better` (strict total order). -1 if n == 0.
template <class BetterThan>
std::ptrdiff_t arg_best(std::ptrdiff_t n, BetterThan better) {
  if (n <= 0) return -1;
  std::ptrdiff_t best = 0;
#ifdef _OPENMP
#pragma omp parallel
  {
    std::ptrdiff_t local = -1;
#pragma omp for schedule(static) nowait
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      if (local < 0 || better(i, local)) local = i;
    }
#pragma omp critical
    {
      if (local >= 0 && local != best && better(local, best)) best = local;
    }
  }
#else
  for (std::ptrdiff_t i = 1; i < n; ++i) {
    if (better(i, best)) best = i;
  }
#endif
  return best;
}

namespace serial {

template <class Fn>
void for_index(std::ptrdiff_t n, Fn&& fn) {
  for (std::ptrdiff_t i = 0; i < n; ++i) fn(i);
}

template <class BetterThan>
std::ptrdiff_t arg_best(std::ptrdiff_t n, BetterThan better) {
  if (n <= 0) return -1;
  std::ptrdiff_t best = 0;
  for (std::ptrdiff_t i = 1; i < n; ++i) {
    if (better(i, best)) best = i;
  }
  return best;
}

}  // namespace serial

}  // namespace agile::par
