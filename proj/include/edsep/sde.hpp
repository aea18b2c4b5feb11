#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "edsep/mixalg.hpp"
#include "edsep/rng.hpp"

namespace edsep {

// Parameters of the separation SDE dx = -γ P̄ x dt + g(t) dw with the
// variance-exploding diffusion g(t) = σ_min ρ^t sqrt(2 log ρ), ρ = σ_max/σ_min.
class SdeParams {
 public:
  // gamma=2, sigma_min=0.05, sigma_max=0.5, t_eps=0.03, T=1.
  SdeParams();
  SdeParams(double gamma, double sigma_min, double sigma_max, double t_eps, double t_max);

  // σ_min == σ_max, so g ≡ 0 and both λ vanish. Only meant for tests of the
  // deterministic drift.
  static SdeParams degenerate_for_testing(double gamma, double sigma, double t_eps,
                                          double t_max);

  double gamma() const { return gamma_; }
  double sigma_min() const { return sigma_min_; }
  double sigma_max() const { return sigma_max_; }
  double t_eps() const { return t_eps_; }
  double t_max() const { return t_max_; }
  double log_rho() const { return log_rho_; }
  bool degenerate() const { return log_rho_ == 0.0; }

 private:
  struct Unchecked {};
  SdeParams(Unchecked, double gamma, double sigma_min, double sigma_max, double t_eps,
            double t_max);

  double gamma_;
  double sigma_min_;
  double sigma_max_;
  double t_eps_;
  double t_max_;
  double log_rho_;
};

// Eigenvalues of Σ_t on the P (λ1) and P̄ (λ2) subspaces, and the scalar
// noise level σ(t) = sqrt(λ1) + sqrt(λ2) fed to the network.
struct NoiseScales {
  double lambda1;
  double lambda2;
  double sigma;
};

struct NoiseRates {
  double lambda1_dot;
  double lambda2_dot;
};

NoiseScales noise_scales(const SdeParams& p, double t);
NoiseRates noise_scales_dot(const SdeParams& p, double t);
double diffusion_g(const SdeParams& p, double t);

// c_mean * P x + c_residual * P̄ x. Every schedule operator (L_t, L_t^-1,
// Σ_t, A) is diagonal in the {P, P̄} decomposition and goes through here.
StackedSignal apply_spectral(const StackedSignal& x, double c_mean, double c_residual);

// Throws InvalidArgument unless y equals the row-sum of s to 1e-8.
void require_mixture_consistent(const StackedSignal& s, std::span<const double> y);

// μ_t = s̄ + e^{-γt} P̄ s.
StackedSignal marginal_mean(const StackedSignal& s, std::span<const double> y,
                            const SdeParams& p, double t);
StackedSignal apply_Lt(const StackedSignal& x, const SdeParams& p, double t);
// Requires t >= t_eps.
StackedSignal apply_Lt_inverse(const StackedSignal& x, const SdeParams& p, double t);
StackedSignal apply_Sigma(const StackedSignal& x, const SdeParams& p, double t);

// One exact draw x_t = μ_t + L_t z.
StackedSignal sample_marginal(const StackedSignal& s, std::span<const double> y,
                              const SdeParams& p, double t, Rng& rng);

struct ForwardPath {
  std::vector<double> times;
  std::vector<StackedSignal> states;  // states.back() is the endpoint

  const StackedSignal& endpoint() const { return states.back(); }
};

// Fixed-step simulation from x_0 = s to t = T. The linear drift is
// propagated exactly over each step (P̄ x decays by e^{-γ dt}); the noise
// increment is g(t_n) sqrt(dt) z. With store_path = false only the endpoint
// is kept.
ForwardPath forward_em_simulate(const StackedSignal& s, std::span<const double> y,
                                const SdeParams& p, int n_steps, Rng& rng,
                                bool store_path = true);

}  // namespace edsep
