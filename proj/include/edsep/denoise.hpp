#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "edsep/dsp.hpp"
#include "edsep/mixalg.hpp"
#include "edsep/sde.hpp"

namespace edsep {

// Arguments of D(x_t, σ(t), y).
struct DenoiserInput {
  const StackedSignal& x_t;
  double t;
  std::span<const double> y;
};

// Checks shapes and t ∈ [t_eps, T].
void validate_input(const DenoiserInput& in, const SdeParams& p);

// An estimator of μ_t given x_t and the mixture. Backends are read-only
// during inference and safe to share across threads.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual StackedSignal denoise(const DenoiserInput& in) const = 0;
  virtual const SdeParams& sde() const = 0;
};

inline StackedSignal denoise(const Denoiser& model, const DenoiserInput& in) {
  return model.denoise(in);
}

// Sources drawn i.i.d. N(0, σ_s²) per sample.
struct GaussianOraclePrior {
  double sigma_s = 0.1;
};

// Wiener gain of the oracle on the P̄ subspace.
double oracle_gain(const GaussianOraclePrior& prior, const SdeParams& p, double t);

// Exact conditional mean E[μ_t | x_t, y] under the Gaussian prior.
//
// Conditioned on y, the mean part of every state is fixed: P x_t carries no
// information about the sources beyond s̄ = y/K, so E[P μ_t | x_t, y] = s̄.
// On the residual subspace μ_t contributes e^{-γt} P̄ s with
// P̄ s ~ N(0, σ_s² P̄), and x_t adds independent noise sqrt(λ2) P̄ z, so
//   P̄ x_t = e^{-γt} P̄ s + sqrt(λ2) P̄ z.
// Both terms are isotropic Gaussians on the same subspace, hence
//   E[e^{-γt} P̄ s | P̄ x_t] = κ P̄ x_t,
//   κ = e^{-2γt} σ_s² / (e^{-2γt} σ_s² + λ2(t)),
// and the estimate is s̄ + κ P̄ x_t. It minimizes the weighted denoising loss
// for data from gen_gaussian_pair.
StackedSignal oracle_denoise(const GaussianOraclePrior& prior, const SdeParams& p,
                             const DenoiserInput& in);

class GaussianOracleDenoiser final : public Denoiser {
 public:
  GaussianOracleDenoiser(GaussianOraclePrior prior, SdeParams sde)
      : prior_(prior), sde_(sde) {}
  StackedSignal denoise(const DenoiserInput& in) const override {
    return oracle_denoise(prior_, sde_, in);
  }
  const SdeParams& sde() const override { return sde_; }
  const GaussianOraclePrior& prior() const { return prior_; }

 private:
  GaussianOraclePrior prior_;
  SdeParams sde_;
};

enum class NoiseConditioning {
  kLogHalfSigma,  // ln(σ(t) / 2)
  kHalfLogSigma,  // ½ ln σ(t)
};

double noise_conditioning(const SdeParams& p, double t, NoiseConditioning mode);

enum class Precision { kF64, kF32 };

struct NetworkConfig {
  std::size_t num_sources = 2;
  std::vector<int> hidden = {256, 256, 256};
  dsp::StftConfig stft;
  double alpha = 0.5;
  double beta = 0.15;
  NoiseConditioning conditioning = NoiseConditioning::kLogHalfSigma;
  Precision precision = Precision::kF64;

  // (K + 1) compressed channels as re/im per bin, plus the conditioning.
  int input_dim() const;
  // K channels of re/im per bin.
  int output_dim() const;
  void validate() const;
};

// A named, shaped block of parameters (or of a matching gradient or moment).
struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

using TensorList = std::vector<Tensor>;

// Zero-filled copy with the same names and shapes.
TensorList zeros_like(const TensorList& tensors);
std::size_t total_size(const TensorList& tensors);

// Activations kept by a forward pass over a block of frames.
struct MlpTrace {
  Eigen::MatrixXd input;                  // in_dim x frames
  std::vector<Eigen::MatrixXd> pre;       // pre-activation of each hidden layer
  std::vector<Eigen::MatrixXd> post;      // SiLU output of each hidden layer
  Eigen::MatrixXd output;                 // out_dim x frames
};

// F_θ: per-frame fully connected network on compressed STFT features of
// (x_t, y) with the noise conditioning appended; the linear head emits K
// channels of STFT coefficients that are inverted back to the time domain.
// D = x_t + L_t F.
class NeuralDenoiser final : public Denoiser {
 public:
  NeuralDenoiser(NetworkConfig cfg, SdeParams sde, std::uint64_t init_seed);
  // Parameters supplied directly (checkpoint reload); shapes are checked.
  NeuralDenoiser(NetworkConfig cfg, SdeParams sde, TensorList params);

  StackedSignal denoise(const DenoiserInput& in) const override;
  const SdeParams& sde() const override { return sde_; }

  const NetworkConfig& config() const { return cfg_; }
  const TensorList& params() const { return params_; }
  TensorList& mutable_params() { return params_; }
  void set_zero();

  // Expected (name, shape) of every tensor for a configuration.
  static TensorList layout(const NetworkConfig& cfg);

  // in_dim x frames feature block for one input.
  Eigen::MatrixXd features(const StackedSignal& x_t, double noise_cond,
                           std::span<const double> y) const;
  MlpTrace forward_frames(Eigen::MatrixXd features) const;
  // Accumulates parameter gradients (scaled by `weight`) given dL/d(output).
  void backward_frames(const MlpTrace& trace, const Eigen::MatrixXd& grad_output,
                       TensorList& grads, double weight = 1.0) const;
  // Inverse STFT of a block of output columns to a K x M residual.
  StackedSignal residual_from_output(const Eigen::Ref<const Eigen::MatrixXd>& output,
                                     std::size_t num_samples) const;
  // dL/d(output) for a block of frames from dL/d(residual).
  Eigen::MatrixXd output_gradient(const StackedSignal& grad_residual) const;

 private:
  NetworkConfig cfg_;
  SdeParams sde_;
  TensorList params_;
};

// Time-domain residual F_θ(x_t, noise_cond, y), K x M.
StackedSignal net_forward(const NeuralDenoiser& net, const StackedSignal& x_t,
                          double noise_cond, std::span<const double> y);

// One fully specified draw of the weighted denoising objective. A standard
// draw evaluates x_t = μ_t + L_t z at time t against μ_t. A boundary draw
// evaluates x̂_T = s̄ + L_T z at t = T against μ_T(a), minimized over every
// source permutation a.
struct LossDraw {
  StackedSignal s;
  Signal y;
  double t = 0.0;
  StackedSignal z;
  bool boundary = false;
};

struct DrawLoss {
  double loss = 0.0;
  Permutation chosen = Permutation::identity(1);
};

// ‖L_t^-1 (D - target)‖² / (K M) for any backend.
DrawLoss draw_loss(const Denoiser& model, const LossDraw& draw);

// The loss averaged over draws; parameter gradients are accumulated into
// `grads` (which must match net.params()).
double batch_loss_and_grad(const NeuralDenoiser& net, std::span<const LossDraw> draws,
                           TensorList& grads, int jobs = 1);

struct GradCheckOptions {
  int num_params = 200;
  double step = 1e-5;
  std::uint64_t seed = 1;
  // Test hook applied to the analytic gradient before comparison.
  std::function<void(TensorList&)> corrupt;
};

// Maximum relative error between analytic and central-difference gradients
// over randomly chosen parameters: |a - n| / max(|a|, |n|, 1e-6).
double grad_check(const NeuralDenoiser& net, std::span<const LossDraw> probe_batch,
                  const GradCheckOptions& opts = {});

}  // namespace edsep
