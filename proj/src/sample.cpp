#include "edsep/sample.hpp"

#include <cmath>
#include <string>

#include "edsep/error.hpp"
#include "edsep/parallel.hpp"

namespace edsep {

namespace {

void notify(const SampleObserver& observer, const char* stage, double t,
            const StackedSignal& x) {
  if (observer) observer(stage, t, x);
}

void require_state(const StackedSignal& x, std::size_t step) {
  if (!x.all_finite()) {
    throw NumericalError("sampler: non-finite state at step " + std::to_string(step));
  }
}

StackedSignal finish(const StackedSignal& x, std::span<const double> y, const SdeParams& p,
                     const SamplerConfig& cfg) {
  return cfg.mean_correct ? mean_correction(x, y, p) : x;
}

}  // namespace

std::string to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::kAlgorithm1:
      return "algorithm1";
    case SamplerKind::kOde:
      return "ode";
    case SamplerKind::kReverseEm:
      return "reverse-em";
  }
  return "unknown";
}

SamplerKind sampler_from_string(const std::string& name) {
  if (name == "algorithm1") return SamplerKind::kAlgorithm1;
  if (name == "ode") return SamplerKind::kOde;
  if (name == "reverse-em") return SamplerKind::kReverseEm;
  throw InvalidArgument("unknown sampler '" + name + "'");
}

void SamplerConfig::validate() const {
  if (n_steps < 1) throw InvalidArgument("SamplerConfig: n_steps must be >= 1");
}

TimeGrid build_time_grid(const SdeParams& p, const SamplerConfig& cfg) {
  cfg.validate();
  TimeGrid grid;
  const int n = cfg.n_steps;
  grid.times.resize(static_cast<std::size_t>(n) + 1);
  const double span = p.t_max() - p.t_eps();
  for (int i = 0; i <= n; ++i) grid.times[i] = p.t_max() - span * i / n;
  grid.times.front() = p.t_max();
  grid.times.back() = p.t_eps();
  return grid;
}

DriftCoefficients drift_coefficients(const SdeParams& p, double t) {
  if (!(t >= p.t_eps())) {
    throw InvalidArgument("drift_coefficients: t=" + std::to_string(t) + " below t_eps");
  }
  const NoiseScales n = noise_scales(p, t);
  const NoiseRates r = noise_scales_dot(p, t);
  return {r.lambda1_dot / (2.0 * n.lambda1), r.lambda2_dot / (2.0 * n.lambda2)};
}

StackedSignal drift_from_denoised(const SdeParams& p, const StackedSignal& x,
                                  const StackedSignal& denoised, double t) {
  const DriftCoefficients a = drift_coefficients(p, t);
  // -γ P̄ x + A (x - d), both diagonal in {P, P̄}.
  StackedSignal out = apply_spectral(x, 0.0, -p.gamma());
  out += apply_spectral(x - denoised, a.mean, a.residual);
  return out;
}

StackedSignal ode_drift(const Denoiser& model, const StackedSignal& x, double t,
                        std::span<const double> y) {
  const StackedSignal d = model.denoise({x, t, y});
  return drift_from_denoised(model.sde(), x, d, t);
}

StackedSignal mean_correction(const StackedSignal& x, std::span<const double> y,
                              const SdeParams& p) {
  StackedSignal out = stack_mixture(y, x.num_sources());
  out.add_scaled(project_residual(x), std::exp(p.gamma() * p.t_eps()));
  return out;
}

StackedSignal initial_state(std::span<const double> y, std::size_t num_sources,
                            const SdeParams& p, Rng& rng) {
  StackedSignal x = stack_mixture(y, num_sources);
  x += apply_Lt(normal_stacked(num_sources, y.size(), rng), p, p.t_max());
  return x;
}

StackedSignal stochastic_sample(const Denoiser& model, std::span<const double> y,
                                std::size_t num_sources, const SamplerConfig& cfg, Rng& rng,
                                const SampleObserver& observer) {
  const SdeParams& p = model.sde();
  const TimeGrid grid = build_time_grid(p, cfg);
  StackedSignal x = initial_state(y, num_sources, p, rng);
  notify(observer, "init", grid.times.front(), x);

  for (std::size_t i = 0; i < grid.steps(); ++i) {
    const double t = grid.times[i];
    const double dt = grid.times[i + 1] - t;
    const StackedSignal d_x = model.denoise({x, t, y});
    StackedSignal x_hat = d_x;
    x_hat += apply_Lt(normal_stacked(num_sources, y.size(), rng), p, t);
    require_state(x_hat, i);
    notify(observer, "post_noise", t, x_hat);

    const StackedSignal d_hat = cfg.reuse_denoise ? d_x : model.denoise({x_hat, t, y});
    x = x_hat;
    x.add_scaled(drift_from_denoised(p, x_hat, d_hat, t), dt);
    require_state(x, i);
    notify(observer, "post_drift", grid.times[i + 1], x);
  }
  return finish(x, y, p, cfg);
}

StackedSignal ode_sample(const Denoiser& model, std::span<const double> y,
                         std::size_t num_sources, const SamplerConfig& cfg, Rng& rng,
                         const SampleObserver& observer) {
  const SdeParams& p = model.sde();
  const TimeGrid grid = build_time_grid(p, cfg);
  StackedSignal x = initial_state(y, num_sources, p, rng);
  notify(observer, "init", grid.times.front(), x);
  for (std::size_t i = 0; i < grid.steps(); ++i) {
    const double t = grid.times[i];
    x.add_scaled(ode_drift(model, x, t, y), grid.times[i + 1] - t);
    require_state(x, i);
    notify(observer, "post_drift", grid.times[i + 1], x);
  }
  return finish(x, y, p, cfg);
}

StackedSignal score_from_denoised(const SdeParams& p, const StackedSignal& x,
                                  const StackedSignal& denoised, double t) {
  const NoiseScales n = noise_scales(p, t);
  return apply_spectral(denoised - x, 1.0 / n.lambda1, 1.0 / n.lambda2);
}

StackedSignal reverse_em_sample(const Denoiser& model, std::span<const double> y,
                                std::size_t num_sources, const SamplerConfig& cfg, Rng& rng,
                                const SampleObserver& observer) {
  const SdeParams& p = model.sde();
  const TimeGrid grid = build_time_grid(p, cfg);
  StackedSignal x = initial_state(y, num_sources, p, rng);
  notify(observer, "init", grid.times.front(), x);
  for (std::size_t i = 0; i < grid.steps(); ++i) {
    const double t = grid.times[i];
    const double dt = grid.times[i + 1] - t;  // negative
    const double g = diffusion_g(p, t);
    const StackedSignal d = model.denoise({x, t, y});
    StackedSignal drift = apply_spectral(x, 0.0, -p.gamma());
    drift.add_scaled(score_from_denoised(p, x, d, t), -g * g);
    const StackedSignal z = normal_stacked(num_sources, y.size(), rng);
    x.add_scaled(drift, dt);
    x.add_scaled(z, g * std::sqrt(-dt));
    require_state(x, i);
    notify(observer, "post_drift", grid.times[i + 1], x);
  }
  return finish(x, y, p, cfg);
}

StackedSignal separate(const Denoiser& model, std::span<const double> y,
                       std::size_t num_sources, const SamplerConfig& cfg, Rng& rng,
                       const SampleObserver& observer) {
  switch (cfg.kind) {
    case SamplerKind::kAlgorithm1:
      return stochastic_sample(model, y, num_sources, cfg, rng, observer);
    case SamplerKind::kOde:
      return ode_sample(model, y, num_sources, cfg, rng, observer);
    case SamplerKind::kReverseEm:
      return reverse_em_sample(model, y, num_sources, cfg, rng, observer);
  }
  throw InvalidArgument("separate: unknown sampler");
}

std::vector<StackedSignal> separate_many(const Denoiser& model,
                                         const std::function<Signal(std::size_t)>& mixture,
                                         std::size_t n, std::size_t num_sources,
                                         const SamplerConfig& cfg, std::uint64_t seed,
                                         int jobs) {
  std::vector<StackedSignal> out(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    Rng rng = make_rng(seed, Stream::kSampler, i);
    const Signal y = mixture(i);
    out[i] = separate(model, y, num_sources, cfg, rng);
  });
  return out;
}

}  // namespace edsep
