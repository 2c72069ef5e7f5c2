#pragma once

// Index-parallel loop used by the data-parallel kernels (bus-row evaluation,
// multistart solves, exhaustive enumeration, compare cells). Every kernel
// keeps a serial path; tests assert both paths agree bit for bit.

#include <cstddef>
#include <exception>
#include <vector>

#include <omp.h>

namespace loadshift {

enum class Execution { serial, parallel };

inline int worker_count() { return omp_get_max_threads(); }

template <typename Fn>
void for_each_index(Execution exec, std::size_t count, Fn&& fn) {
  if (exec == Execution::serial || count < 2) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  // Exceptions must not cross the OpenMP region boundary.
  std::vector<std::exception_ptr> errors(count);
  const auto n = static_cast<long long>(count);
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < n; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace loadshift
