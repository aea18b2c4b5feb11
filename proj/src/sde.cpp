#include "edsep/sde.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "edsep/error.hpp"

namespace edsep {

namespace {

void require_time(const SdeParams& p, double t, const char* what) {
  if (!(t >= 0.0 && t <= p.t_max())) {
    throw InvalidArgument(std::string(what) + ": t=" + std::to_string(t) + " outside [0, " +
                          std::to_string(p.t_max()) + "]");
  }
}

double require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericalError(std::string(what) + ": non-finite result");
  return v;
}

}  // namespace

SdeParams::SdeParams() : SdeParams(2.0, 0.05, 0.5, 0.03, 1.0) {}

SdeParams::SdeParams(double gamma, double sigma_min, double sigma_max, double t_eps,
                     double t_max)
    : SdeParams(Unchecked{}, gamma, sigma_min, sigma_max, t_eps, t_max) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw InvalidArgument("SdeParams: gamma must be > 0");
  if (!(sigma_min > 0.0 && sigma_min < sigma_max) || !std::isfinite(sigma_max)) {
    throw InvalidArgument("SdeParams: need 0 < sigma_min < sigma_max");
  }
  if (!(t_eps > 0.0 && t_eps < t_max) || !std::isfinite(t_max)) {
    throw InvalidArgument("SdeParams: need 0 < t_eps < T");
  }
}

SdeParams::SdeParams(Unchecked, double gamma, double sigma_min, double sigma_max,
                     double t_eps, double t_max)
    : gamma_(gamma),
      sigma_min_(sigma_min),
      sigma_max_(sigma_max),
      t_eps_(t_eps),
      t_max_(t_max),
      log_rho_(std::log(sigma_max / sigma_min)) {}

SdeParams SdeParams::degenerate_for_testing(double gamma, double sigma, double t_eps,
                                            double t_max) {
  return SdeParams(Unchecked{}, gamma, sigma, sigma, t_eps, t_max);
}

NoiseScales noise_scales(const SdeParams& p, double t) {
  require_time(p, t, "noise_scales");
  const double s2 = p.sigma_min() * p.sigma_min();
  const double lr = p.log_rho();
  const double g = p.gamma();
  // ξ1 = 0: σ²(ρ^{2t} - 1).
  const double l1 = require_finite(s2 * std::expm1(2.0 * t * lr), "noise_scales");
  // ρ^{2t} - e^{-2γt} = e^{-2γt} (e^{2t(log ρ + γ)} - 1), exact near t = 0.
  const double l2 = require_finite(
      s2 * lr / (g + lr) * std::exp(-2.0 * g * t) * std::expm1(2.0 * t * (lr + g)),
      "noise_scales");
  return {l1, l2, std::sqrt(l1) + std::sqrt(l2)};
}

NoiseRates noise_scales_dot(const SdeParams& p, double t) {
  require_time(p, t, "noise_scales_dot");
  if (!(t > 0.0)) throw InvalidArgument("noise_scales_dot: t must be > 0");
  const double s2 = p.sigma_min() * p.sigma_min();
  const double lr = p.log_rho();
  const double g = p.gamma();
  const double grow = std::exp(2.0 * t * lr);
  const double d1 = s2 * 2.0 * lr * grow;
  const double d2 = s2 * lr / (g + lr) * (2.0 * lr * grow + 2.0 * g * std::exp(-2.0 * g * t));
  return {require_finite(d1, "noise_scales_dot"), require_finite(d2, "noise_scales_dot")};
}

double diffusion_g(const SdeParams& p, double t) {
  require_time(p, t, "diffusion_g");
  const double lr = p.log_rho();
  return require_finite(p.sigma_min() * std::exp(t * lr) * std::sqrt(2.0 * lr), "diffusion_g");
}

StackedSignal apply_spectral(const StackedSignal& x, double c_mean, double c_residual) {
  x.require_finite("apply_spectral");
  const Signal mean = source_mean(x);
  StackedSignal out(x.num_sources(), x.num_samples());
  for (std::size_t k = 0; k < x.num_sources(); ++k) {
    const auto in = x.row(k);
    auto o = out.row(k);
    for (std::size_t m = 0; m < in.size(); ++m) {
      o[m] = c_mean * mean[m] + c_residual * (in[m] - mean[m]);
    }
  }
  return out;
}

void require_mixture_consistent(const StackedSignal& s, std::span<const double> y) {
  if (y.size() != s.num_samples()) {
    throw InvalidArgument("mixture length " + std::to_string(y.size()) + " != M " +
                          std::to_string(s.num_samples()));
  }
  const Signal sum = s.row_sum();
  for (std::size_t m = 0; m < y.size(); ++m) {
    const double tol = 1e-8 * std::max(1.0, std::abs(y[m]));
    if (!(std::abs(sum[m] - y[m]) <= tol)) {
      throw InvalidArgument("mixture consistency violated at sample " + std::to_string(m));
    }
  }
}

StackedSignal marginal_mean(const StackedSignal& s, std::span<const double> y,
                            const SdeParams& p, double t) {
  require_time(p, t, "marginal_mean");
  require_mixture_consistent(s, y);
  StackedSignal mu = stack_mixture(y, s.num_sources());
  mu.add_scaled(project_residual(s), std::exp(-p.gamma() * t));
  return mu;
}

StackedSignal apply_Lt(const StackedSignal& x, const SdeParams& p, double t) {
  const NoiseScales n = noise_scales(p, t);
  return apply_spectral(x, std::sqrt(n.lambda1), std::sqrt(n.lambda2));
}

StackedSignal apply_Lt_inverse(const StackedSignal& x, const SdeParams& p, double t) {
  if (!(t >= p.t_eps())) {
    throw InvalidArgument("apply_Lt_inverse: t=" + std::to_string(t) + " below t_eps=" +
                          std::to_string(p.t_eps()));
  }
  const NoiseScales n = noise_scales(p, t);
  if (!(n.lambda1 > 0.0 && n.lambda2 > 0.0)) {
    throw InvalidArgument("apply_Lt_inverse: singular scaling");
  }
  return apply_spectral(x, 1.0 / std::sqrt(n.lambda1), 1.0 / std::sqrt(n.lambda2));
}

StackedSignal apply_Sigma(const StackedSignal& x, const SdeParams& p, double t) {
  const NoiseScales n = noise_scales(p, t);
  return apply_spectral(x, n.lambda1, n.lambda2);
}

StackedSignal sample_marginal(const StackedSignal& s, std::span<const double> y,
                              const SdeParams& p, double t, Rng& rng) {
  StackedSignal x = marginal_mean(s, y, p, t);
  const StackedSignal z = normal_stacked(s.num_sources(), s.num_samples(), rng);
  x += apply_Lt(z, p, t);
  return x;
}

ForwardPath forward_em_simulate(const StackedSignal& s, std::span<const double> y,
                                const SdeParams& p, int n_steps, Rng& rng,
                                bool store_path) {
  if (n_steps < 100) throw InvalidArgument("forward_em_simulate: n_steps must be >= 100");
  require_mixture_consistent(s, y);
  s.require_finite("forward_em_simulate");

  const double dt = p.t_max() / n_steps;
  const double decay = std::exp(-p.gamma() * dt);
  const double sqrt_dt = std::sqrt(dt);
  const std::size_t k = s.num_sources();
  const std::size_t m = s.num_samples();

  ForwardPath path;
  path.times.push_back(0.0);
  path.states.push_back(s);
  StackedSignal x = s;
  Signal noise(k * m);
  std::normal_distribution<double> normal(0.0, 1.0);

  for (int n = 0; n < n_steps; ++n) {
    const double t = n * dt;
    const double g = diffusion_g(p, t);
    const Signal mean = source_mean(x);
    for (std::size_t r = 0; r < k; ++r) {
      auto row = x.row(r);
      for (std::size_t j = 0; j < m; ++j) {
        row[j] = mean[j] + decay * (row[j] - mean[j]) + g * sqrt_dt * normal(rng);
      }
    }
    if (!x.all_finite()) {
      throw NumericalError("forward_em_simulate: non-finite state at step " +
                           std::to_string(n + 1));
    }
    if (store_path || n + 1 == n_steps) {
      const double t_next = (n + 1 == n_steps) ? p.t_max() : (n + 1) * dt;
      if (!store_path) {
        path.times.clear();
        path.states.clear();
      }
      path.times.push_back(t_next);
      path.states.push_back(x);
    }
  }
  return path;
}

}  // namespace edsep
