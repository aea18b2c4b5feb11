#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <span>
#include <vector>

#include "edsep/mixalg.hpp"
#include "edsep/sde.hpp"

namespace edsep {

// Runs fn(i) for i in [0, n). With jobs <= 1 this is a plain loop; otherwise
// an OpenMP static schedule over `jobs` threads. Callers write results into
// per-index slots so output never depends on the thread count. The first
// exception thrown by any iteration is rethrown on the calling thread.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  if (jobs <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) num_threads(jobs)
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

// Number of hardware threads OpenMP would use by default.
int default_jobs();

// Endpoints of n_paths forward simulations; path i draws from the stream
// (seed, kForwardEm, i). The serial version is the reference the OpenMP
// kernel is tested against.
std::vector<StackedSignal> ensemble_endpoints_serial(const StackedSignal& s,
                                                     std::span<const double> y,
                                                     const SdeParams& p, int n_steps,
                                                     std::size_t n_paths, std::uint64_t seed);
std::vector<StackedSignal> ensemble_endpoints_omp(const StackedSignal& s,
                                                  std::span<const double> y, const SdeParams& p,
                                                  int n_steps, std::size_t n_paths,
                                                  std::uint64_t seed, int jobs);

}  // namespace edsep
