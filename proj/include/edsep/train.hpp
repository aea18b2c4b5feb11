#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>

#include "edsep/data.hpp"
#include "edsep/denoise.hpp"
#include "edsep/error.hpp"
#include "edsep/rng.hpp"

namespace edsep {

struct TrainConfig {
  std::size_t batch_size = 16;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t total_steps = 20000;
  double p_boundary = 0.1;  // p_T
  std::uint64_t checkpoint_interval = 1000;
  std::uint64_t log_interval = 100;
  // Random crop length for training examples; 0 trains on whole signals.
  std::size_t segment_samples = 0;
  int jobs = 1;

  void validate() const;
};

// Weighted denoising loss at time t for one fresh draw x_t = μ_t + L_t z.
DrawLoss dsm_loss(const Denoiser& model, const StackedSignal& s, std::span<const double> y,
                  double t, Rng& rng);

// Boundary loss at t = T: x̂_T = s̄ + L_T z scored against μ_T(a), minimized
// over all source permutations a.
DrawLoss boundary_pit_loss(const Denoiser& model, const StackedSignal& s,
                           std::span<const double> y, Rng& rng);

struct AdamMoments {
  TensorList first;
  TensorList second;
};

// One bias-corrected Adam update; `step` counts updates starting at 1.
void adam_update(TensorList& params, const TensorList& grads, AdamMoments& moments,
                 const TrainConfig& cfg, std::uint64_t step);

struct TrainState {
  NeuralDenoiser net;
  AdamMoments moments;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;

  TrainState(NeuralDenoiser net, std::uint64_t seed);
  TrainState(NeuralDenoiser net, AdamMoments moments, std::uint64_t step, std::uint64_t seed);
};

struct StepResult {
  double loss = 0.0;
  std::size_t standard = 0;
  std::size_t boundary = 0;
};

// Randomness for step n is drawn from (seed, kTrain, n), so a run resumed
// from a checkpoint continues bit-identically.
std::vector<LossDraw> draw_batch(const TrainState& state, std::span<const data::SourcePair> batch,
                                 const TrainConfig& cfg);

// Draws per-element branches (boundary with probability p_T, otherwise
// t ~ U(t_eps, T)), accumulates gradients, applies Adam and advances the
// step counter.
StepResult train_step(TrainState& state, std::span<const data::SourcePair> batch,
                      const TrainConfig& cfg);

// Training-set indices used at the state's current step.
std::vector<std::size_t> batch_indices(const TrainState& state, const TrainConfig& cfg,
                                       std::size_t dataset_size);

using PairSource = std::function<data::SourcePair(std::size_t)>;

struct TrainObserver {
  std::function<void(const TrainState&, const StepResult&, double wallclock)> on_step;
};

// Runs until state.step == cfg.total_steps. Writes one JSON line per
// log_interval steps to `log` (if non-null) and a checkpoint every
// checkpoint_interval steps into `checkpoint_dir` (if non-empty).
// Returns the exponential moving average of the loss (decay 0.99).
double train_loop(TrainState& state, const TrainConfig& cfg, const PairSource& source,
                  std::size_t dataset_size, std::ostream* log,
                  const std::filesystem::path& checkpoint_dir = {},
                  const TrainObserver& observer = {});

class CheckpointError : public IoError {
 public:
  using IoError::IoError;
};
class CheckpointFormatError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointTruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointShapeError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// "EDSP", u32 version, u64 header length, JSON header, then little-endian
// f64 blobs (parameters, Adam first moments, Adam second moments) in
// directory order.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace edsep
