#pragma once

#include "acwg/common.hpp"

#include <cstddef>
#include <exception>
#include <mutex>

#include <omp.h>

namespace acwg::detail {

/// Runs fn(i) for i in [0, n). Under Exec::parallel the iterations are spread
/// over OpenMP threads; the first exception thrown by any iteration is
/// rethrown on the calling thread. Callers write results into per-index slots
/// so output never depends on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, Exec exec, Fn&& fn) {
  if (exec == Exec::serial || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic) num_threads(acwg::jobs())
  for (long long i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace acwg::detail
