#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "edsep/denoise.hpp"
#include "edsep/rng.hpp"
#include "edsep/sde.hpp"

namespace edsep {

enum class SamplerKind { kAlgorithm1, kOde, kReverseEm };
enum class GridShape { kLinear };

std::string to_string(SamplerKind kind);
SamplerKind sampler_from_string(const std::string& name);

struct SamplerConfig {
  int n_steps = 29;
  GridShape grid = GridShape::kLinear;
  SamplerKind kind = SamplerKind::kAlgorithm1;
  bool mean_correct = true;
  // Algorithm 1 only: reuse D(x_i) in the drift instead of evaluating
  // D(x̂_i), halving the number of denoiser calls.
  bool reuse_denoise = false;

  void validate() const;
};

// Strictly decreasing t_0 = T, ..., t_N = t_eps.
struct TimeGrid {
  std::vector<double> times;
  std::size_t steps() const { return times.size() - 1; }
};

TimeGrid build_time_grid(const SdeParams& p, const SamplerConfig& cfg);

// Per-step state hook: stage is "init", "post_noise" or "post_drift".
using SampleObserver =
    std::function<void(const char* stage, double t, const StackedSignal& state)>;

// Coefficients of A = a1 P + a2 P̄ with a_k = λ̇_k / (2 λ_k).
struct DriftCoefficients {
  double mean;
  double residual;
};
DriftCoefficients drift_coefficients(const SdeParams& p, double t);

// -γ P̄ x + A x - A d, where d = D(x, σ(t), y) has already been evaluated.
StackedSignal drift_from_denoised(const SdeParams& p, const StackedSignal& x,
                                  const StackedSignal& denoised, double t);

// One denoiser call: -γ P̄ x + A x - A D(x, σ(t), y). Requires t >= t_eps.
StackedSignal ode_drift(const Denoiser& model, const StackedSignal& x, double t,
                        std::span<const double> y);

// s̄ + e^{γ t_eps} P̄ x: undoes the residual attenuation of μ_{t_eps}.
StackedSignal mean_correction(const StackedSignal& x, std::span<const double> y,
                              const SdeParams& p);

// x_0 ~ N(s̄, Σ_T).
StackedSignal initial_state(std::span<const double> y, std::size_t num_sources,
                            const SdeParams& p, Rng& rng);

// The stochastic sampler: per step, renoise the denoised state at the
// current level, then take one Euler step of the probability-flow ODE from
// the renoised point.
StackedSignal stochastic_sample(const Denoiser& model, std::span<const double> y,
                                std::size_t num_sources, const SamplerConfig& cfg, Rng& rng,
                                const SampleObserver& observer = {});

// Euler integration of the probability-flow ODE, one call per step.
StackedSignal ode_sample(const Denoiser& model, std::span<const double> y,
                         std::size_t num_sources, const SamplerConfig& cfg, Rng& rng,
                         const SampleObserver& observer = {});

// Euler–Maruyama on the reverse-time SDE with the score
// Σ_t^-1 (D(x) - x), over cfg.n_steps uniform steps.
StackedSignal reverse_em_sample(const Denoiser& model, std::span<const double> y,
                                std::size_t num_sources, const SamplerConfig& cfg, Rng& rng,
                                const SampleObserver& observer = {});

// Score implied by a denoiser output: Σ_t^-1 (d - x).
StackedSignal score_from_denoised(const SdeParams& p, const StackedSignal& x,
                                  const StackedSignal& denoised, double t);

// Dispatches on cfg.kind.
StackedSignal separate(const Denoiser& model, std::span<const double> y,
                       std::size_t num_sources, const SamplerConfig& cfg, Rng& rng,
                       const SampleObserver& observer = {});

// Counts calls to the wrapped denoiser.
class CountingDenoiser final : public Denoiser {
 public:
  explicit CountingDenoiser(const Denoiser& inner) : inner_(inner) {}
  StackedSignal denoise(const DenoiserInput& in) const override {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return inner_.denoise(in);
  }
  const SdeParams& sde() const override { return inner_.sde(); }
  std::size_t calls() const { return calls_.load(); }

 private:
  const Denoiser& inner_;
  mutable std::atomic<std::size_t> calls_{0};
};

// Separates mixtures [0, n) in parallel; mixture i samples from the stream
// (seed, kSampler, i).
std::vector<StackedSignal> separate_many(const Denoiser& model,
                                         const std::function<Signal(std::size_t)>& mixture,
                                         std::size_t n, std::size_t num_sources,
                                         const SamplerConfig& cfg, std::uint64_t seed, int jobs);

}  // namespace edsep
