#pragma once

#include <omp.h>

namespace panodense {

/// Number of workers a `workers` setting resolves to; 0 means all hardware
/// threads.
inline int resolve_workers(int workers) { return workers > 0 ? workers : omp_get_max_threads(); }

/// Runs fn(i) for i in [begin, end). Iterations must write disjoint state;
/// results are then independent of the worker count.
template <typename Fn>
void parallel_for(int begin, int end, int workers, Fn&& fn) {
  const int n = resolve_workers(workers);
#pragma omp parallel for num_threads(n) schedule(dynamic, 1)
  for (int i = begin; i < end; ++i) fn(i);
}

}  // namespace panodense
