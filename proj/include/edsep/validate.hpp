#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "edsep/denoise.hpp"
#include "edsep/mixalg.hpp"
#include "edsep/sample.hpp"
#include "edsep/sde.hpp"

namespace edsep {

// One row of a pass/fail table.
struct Check {
  std::string name;
  double measured = 0.0;
  double expected = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

std::string format_checks(const std::vector<Check>& checks);
bool all_pass(const std::vector<Check>& checks);

// Ensemble statistics of the mean and residual subspaces, measured in an
// orthonormal basis: the P coordinate (Σ_k x_k)/√K and K-1 Helmert contrasts
// spanning P̄. Variances are pooled over samples (and contrasts).
struct SubspaceStats {
  double mean_variance = 0.0;
  double residual_variance = 0.0;
};
SubspaceStats subspace_stats(const std::vector<StackedSignal>& ensemble);

struct MarginalCheckOptions {
  std::size_t num_paths = 20000;
  int em_steps = 2000;
  std::uint64_t seed = 0;
  int jobs = 1;
};

// Simulates the forward SDE from s to T and compares the endpoint ensemble
// with the closed-form marginal: every coordinate mean within 4 standard
// errors of μ_T, subspace variances within 5% of λ1(T) and λ2(T).
std::vector<Check> check_forward_marginal(const StackedSignal& s, const SdeParams& p,
                                          const MarginalCheckOptions& opts);

struct PosteriorCheckOptions {
  std::size_t runs = 5000;
  SamplerConfig sampler;
  std::uint64_t seed = 0;
  int jobs = 1;
};

// Runs the sampler `runs` times on the fixed mixture y. The P component of
// every output must equal s̄ to 1e-8, and the pooled P̄ variance must lie within
// 10% of e^{-2γ t_eps} σ_s² + λ2(t_eps).
std::vector<Check> check_oracle_posterior(const Denoiser& model, double sigma_s,
                                          const Signal& y, std::size_t num_sources,
                                          const PosteriorCheckOptions& opts);

}  // namespace edsep
