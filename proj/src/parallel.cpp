#include "edsep/parallel.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace edsep {

int default_jobs() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

std::vector<StackedSignal> ensemble_endpoints_serial(const StackedSignal& s,
                                                     std::span<const double> y,
                                                     const SdeParams& p, int n_steps,
                                                     std::size_t n_paths, std::uint64_t seed) {
  std::vector<StackedSignal> out;
  out.reserve(n_paths);
  for (std::size_t i = 0; i < n_paths; ++i) {
    Rng rng = make_rng(seed, Stream::kForwardEm, i);
    out.push_back(forward_em_simulate(s, y, p, n_steps, rng, false).endpoint());
  }
  return out;
}

std::vector<StackedSignal> ensemble_endpoints_omp(const StackedSignal& s,
                                                  std::span<const double> y, const SdeParams& p,
                                                  int n_steps, std::size_t n_paths,
                                                  std::uint64_t seed, int jobs) {
  std::vector<StackedSignal> out(n_paths);
  parallel_for(n_paths, jobs, [&](std::size_t i) {
    Rng rng = make_rng(seed, Stream::kForwardEm, i);
    out[i] = forward_em_simulate(s, y, p, n_steps, rng, false).endpoint();
  });
  return out;
}

}  // namespace edsep
