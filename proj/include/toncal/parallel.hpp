#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace toncal {

// Data-parallel loop over [0, n). The callable must write only to slots owned
// by its own index; reductions belong in a serial pass afterwards so results
// stay bit-identical for any thread count.
template <class F>
void parallel_for(std::ptrdiff_t n, F&& fn) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) fn(static_cast<std::size_t>(i));
#else
  for (std::ptrdiff_t i = 0; i < n; ++i) fn(static_cast<std::size_t>(i));
#endif
}

// Serial reference twin of parallel_for, kept for equality tests and the
// kernel benchmark.
template <class F>
void serial_for(std::ptrdiff_t n, F&& fn) {
  for (std::ptrdiff_t i = 0; i < n; ++i) fn(static_cast<std::size_t>(i));
}

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

}  // namespace toncal
