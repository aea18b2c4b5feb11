#include "edsep/denoise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "edsep/error.hpp"
#include "edsep/parallel.hpp"
#include "edsep/rng.hpp"

namespace edsep {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeights = Eigen::Map<const RowMatrix>;
using Weights = Eigen::Map<RowMatrix>;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Eigen::MatrixXd silu(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double v) { return v * sigmoid(v); });
}

Eigen::MatrixXd silu_grad(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double v) {
    const double s = sigmoid(v);
    return s * (1.0 + v * (1.0 - s));
  });
}

void require_finite(const Eigen::MatrixXd& m, std::size_t layer) {
  if (!m.allFinite()) {
    throw NumericalError("network: non-finite activation at layer " + std::to_string(layer));
  }
}

// W x + b for a block of columns, in the configured precision.
Eigen::MatrixXd affine(const Tensor& w, const Tensor& b, const Eigen::MatrixXd& x,
                       Precision precision) {
  const ConstWeights wm(w.values.data(), static_cast<Eigen::Index>(w.shape[0]),
                        static_cast<Eigen::Index>(w.shape[1]));
  const Eigen::Map<const Eigen::VectorXd> bv(b.values.data(),
                                             static_cast<Eigen::Index>(b.values.size()));
  if (precision == Precision::kF32) {
    const Eigen::MatrixXf wf = wm.cast<float>();
    const Eigen::MatrixXf xf = x.cast<float>();
    Eigen::MatrixXf out = wf * xf;
    out.colwise() += bv.cast<float>();
    return out.cast<double>();
  }
  Eigen::MatrixXd out = wm * x;
  out.colwise() += bv;
  return out;
}

}  // namespace

void validate_input(const DenoiserInput& in, const SdeParams& p) {
  if (in.x_t.num_sources() < 2) throw InvalidArgument("denoise: need K >= 2 sources");
  if (in.y.size() != in.x_t.num_samples()) {
    throw InvalidArgument("denoise: mixture length " + std::to_string(in.y.size()) +
                          " != M " + std::to_string(in.x_t.num_samples()));
  }
  if (!(in.t >= p.t_eps() && in.t <= p.t_max())) {
    throw InvalidArgument("denoise: t=" + std::to_string(in.t) + " outside [t_eps, T]");
  }
  in.x_t.require_finite("denoise");
}

double oracle_gain(const GaussianOraclePrior& prior, const SdeParams& p, double t) {
  if (!(prior.sigma_s > 0.0)) throw InvalidArgument("GaussianOraclePrior: sigma_s must be > 0");
  const double signal = std::exp(-2.0 * p.gamma() * t) * prior.sigma_s * prior.sigma_s;
  return signal / (signal + noise_scales(p, t).lambda2);
}

StackedSignal oracle_denoise(const GaussianOraclePrior& prior, const SdeParams& p,
                             const DenoiserInput& in) {
  validate_input(in, p);
  StackedSignal out = stack_mixture(in.y, in.x_t.num_sources());
  out.add_scaled(project_residual(in.x_t), oracle_gain(prior, p, in.t));
  return out;
}

double noise_conditioning(const SdeParams& p, double t, NoiseConditioning mode) {
  const double sigma = noise_scales(p, t).sigma;
  if (!(sigma > 0.0)) throw InvalidArgument("noise_conditioning: σ(t) must be > 0");
  return mode == NoiseConditioning::kLogHalfSigma ? std::log(0.5 * sigma)
                                                  : 0.5 * std::log(sigma);
}

int NetworkConfig::input_dim() const {
  return static_cast<int>(num_sources + 1) * 2 * stft.bins() + 1;
}

int NetworkConfig::output_dim() const {
  return static_cast<int>(num_sources) * 2 * stft.bins();
}

void NetworkConfig::validate() const {
  if (num_sources < 2) throw InvalidArgument("NetworkConfig: need K >= 2");
  if (hidden.empty()) throw InvalidArgument("NetworkConfig: need at least one hidden layer");
  for (int w : hidden) {
    if (w < 1) throw InvalidArgument("NetworkConfig: hidden widths must be positive");
  }
  if (!(alpha > 0.0 && beta > 0.0)) throw InvalidArgument("NetworkConfig: alpha, beta must be > 0");
  stft.validate();
}

TensorList zeros_like(const TensorList& tensors) {
  TensorList out = tensors;
  for (Tensor& t : out) std::fill(t.values.begin(), t.values.end(), 0.0);
  return out;
}

std::size_t total_size(const TensorList& tensors) {
  std::size_t n = 0;
  for (const Tensor& t : tensors) n += t.values.size();
  return n;
}

TensorList NeuralDenoiser::layout(const NetworkConfig& cfg) {
  cfg.validate();
  TensorList out;
  std::vector<int> dims;
  dims.push_back(cfg.input_dim());
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(cfg.output_dim());
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const auto rows = static_cast<std::size_t>(dims[l + 1]);
    const auto cols = static_cast<std::size_t>(dims[l]);
    const std::string prefix = "layer" + std::to_string(l);
    out.push_back({prefix + ".weight", {rows, cols}, std::vector<double>(rows * cols, 0.0)});
    out.push_back({prefix + ".bias", {rows}, std::vector<double>(rows, 0.0)});
  }
  return out;
}

NeuralDenoiser::NeuralDenoiser(NetworkConfig cfg, SdeParams sde, std::uint64_t init_seed)
    : cfg_(std::move(cfg)), sde_(sde), params_(layout(cfg_)) {
  Rng rng = make_rng(init_seed, Stream::kInit, 0);
  for (std::size_t i = 0; i < params_.size(); i += 2) {
    Tensor& w = params_[i];
    Tensor& b = params_[i + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.shape[1]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : w.values) v = dist(rng);
    for (double& v : b.values) v = dist(rng);
  }
}

NeuralDenoiser::NeuralDenoiser(NetworkConfig cfg, SdeParams sde, TensorList params)
    : cfg_(std::move(cfg)), sde_(sde), params_(std::move(params)) {
  const TensorList expected = layout(cfg_);
  if (expected.size() != params_.size()) {
    throw InvalidArgument("NeuralDenoiser: expected " + std::to_string(expected.size()) +
                          " tensors, got " + std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (expected[i].name != params_[i].name || expected[i].shape != params_[i].shape ||
        params_[i].values.size() != expected[i].values.size()) {
      throw InvalidArgument("NeuralDenoiser: tensor '" + params_[i].name +
                            "' does not match layout entry '" + expected[i].name + "'");
    }
    for (double v : params_[i].values) {
      if (!std::isfinite(v)) throw InvalidArgument("NeuralDenoiser: non-finite parameter");
    }
  }
}

void NeuralDenoiser::set_zero() {
  for (Tensor& t : params_) std::fill(t.values.begin(), t.values.end(), 0.0);
}

Eigen::MatrixXd NeuralDenoiser::features(const StackedSignal& x_t, double noise_cond,
                                         std::span<const double> y) const {
  if (x_t.num_sources() != cfg_.num_sources) {
    throw InvalidArgument("network: expected K=" + std::to_string(cfg_.num_sources) +
                          " sources, got " + std::to_string(x_t.num_sources()));
  }
  if (y.size() != x_t.num_samples()) throw InvalidArgument("network: mixture length mismatch");
  StackedSignal channels(cfg_.num_sources + 1, x_t.num_samples());
  for (std::size_t k = 0; k < cfg_.num_sources; ++k) {
    const auto r = x_t.row(k);
    std::copy(r.begin(), r.end(), channels.row(k).begin());
  }
  std::copy(y.begin(), y.end(), channels.row(cfg_.num_sources).begin());
  const dsp::ComplexSpectrogram spec =
      dsp::compress(dsp::stft(channels, cfg_.stft), cfg_.alpha, cfg_.beta);

  const std::size_t bins = spec.bins();
  Eigen::MatrixXd feats(cfg_.input_dim(), static_cast<Eigen::Index>(spec.frames()));
  for (std::size_t f = 0; f < spec.frames(); ++f) {
    auto col = feats.col(static_cast<Eigen::Index>(f));
    for (std::size_t c = 0; c < spec.channels(); ++c) {
      const auto frame = spec.frame(c, f);
      const std::size_t base = c * 2 * bins;
      for (std::size_t b = 0; b < bins; ++b) {
        col(static_cast<Eigen::Index>(base + b)) = frame[b].real();
        col(static_cast<Eigen::Index>(base + bins + b)) = frame[b].imag();
      }
    }
    col(feats.rows() - 1) = noise_cond;
  }
  return feats;
}

MlpTrace NeuralDenoiser::forward_frames(Eigen::MatrixXd features) const {
  MlpTrace trace;
  trace.input = std::move(features);
  const std::size_t n_layers = params_.size() / 2;
  const Eigen::MatrixXd* x = &trace.input;
  for (std::size_t l = 0; l + 1 < n_layers; ++l) {
    trace.pre.push_back(affine(params_[2 * l], params_[2 * l + 1], *x, cfg_.precision));
    trace.post.push_back(silu(trace.pre.back()));
    require_finite(trace.post.back(), l);
    x = &trace.post.back();
  }
  trace.output =
      affine(params_[2 * (n_layers - 1)], params_[2 * n_layers - 1], *x, cfg_.precision);
  require_finite(trace.output, n_layers - 1);
  return trace;
}

void NeuralDenoiser::backward_frames(const MlpTrace& trace, const Eigen::MatrixXd& grad_output,
                                     TensorList& grads, double weight) const {
  const std::size_t n_layers = params_.size() / 2;
  Eigen::MatrixXd delta = grad_output;
  for (std::size_t l = n_layers; l-- > 0;) {
    const Eigen::MatrixXd& input = (l == 0) ? trace.input : trace.post[l - 1];
    const Tensor& w = params_[2 * l];
    Weights gw(grads[2 * l].values.data(), static_cast<Eigen::Index>(w.shape[0]),
               static_cast<Eigen::Index>(w.shape[1]));
    Eigen::Map<Eigen::VectorXd> gb(grads[2 * l + 1].values.data(),
                                   static_cast<Eigen::Index>(w.shape[0]));
    if (cfg_.precision == Precision::kF32) {
      const Eigen::MatrixXf df = delta.cast<float>();
      gw.noalias() += weight * (df * input.cast<float>().transpose()).cast<double>();
    } else {
      gw.noalias() += weight * (delta * input.transpose());
    }
    const Eigen::VectorXd row_sums = delta.rowwise().sum();
    gb.noalias() += weight * row_sums;
    if (l == 0) break;
    const ConstWeights wm(w.values.data(), static_cast<Eigen::Index>(w.shape[0]),
                          static_cast<Eigen::Index>(w.shape[1]));
    Eigen::MatrixXd back;
    if (cfg_.precision == Precision::kF32) {
      back = (wm.cast<float>().transpose() * delta.cast<float>()).cast<double>();
    } else {
      back = wm.transpose() * delta;
    }
    delta = back.cwiseProduct(silu_grad(trace.pre[l - 1]));
  }
}

StackedSignal NeuralDenoiser::residual_from_output(
    const Eigen::Ref<const Eigen::MatrixXd>& output, std::size_t num_samples) const {
  const auto bins = static_cast<std::size_t>(cfg_.stft.bins());
  const auto frames = static_cast<std::size_t>(output.cols());
  if (static_cast<int>(frames) != cfg_.stft.frames(num_samples)) {
    throw InvalidArgument("network: output frame count does not match signal length");
  }
  dsp::ComplexSpectrogram spec(cfg_.num_sources, frames, bins);
  for (std::size_t k = 0; k < cfg_.num_sources; ++k) {
    const std::size_t base = k * 2 * bins;
    for (std::size_t f = 0; f < frames; ++f) {
      auto dst = spec.frame(k, f);
      for (std::size_t b = 0; b < bins; ++b) {
        dst[b] = {output(static_cast<Eigen::Index>(base + b), static_cast<Eigen::Index>(f)),
                  output(static_cast<Eigen::Index>(base + bins + b),
                         static_cast<Eigen::Index>(f))};
      }
    }
  }
  return dsp::istft(spec, cfg_.stft, num_samples);
}

Eigen::MatrixXd NeuralDenoiser::output_gradient(const StackedSignal& grad_residual) const {
  const dsp::ComplexSpectrogram adj = dsp::istft_adjoint(grad_residual, cfg_.stft);
  const std::size_t bins = adj.bins();
  Eigen::MatrixXd out(cfg_.output_dim(), static_cast<Eigen::Index>(adj.frames()));
  for (std::size_t k = 0; k < adj.channels(); ++k) {
    const std::size_t base = k * 2 * bins;
    for (std::size_t f = 0; f < adj.frames(); ++f) {
      const auto src = adj.frame(k, f);
      for (std::size_t b = 0; b < bins; ++b) {
        out(static_cast<Eigen::Index>(base + b), static_cast<Eigen::Index>(f)) = src[b].real();
        out(static_cast<Eigen::Index>(base + bins + b), static_cast<Eigen::Index>(f)) =
            src[b].imag();
      }
    }
  }
  return out;
}

StackedSignal net_forward(const NeuralDenoiser& net, const StackedSignal& x_t,
                          double noise_cond, std::span<const double> y) {
  const MlpTrace trace = net.forward_frames(net.features(x_t, noise_cond, y));
  return net.residual_from_output(trace.output, x_t.num_samples());
}

StackedSignal NeuralDenoiser::denoise(const DenoiserInput& in) const {
  validate_input(in, sde_);
  const double cond = noise_conditioning(sde_, in.t, cfg_.conditioning);
  const StackedSignal residual = net_forward(*this, in.x_t, cond, in.y);
  if (!residual.all_finite()) throw NumericalError("denoise: non-finite network output");
  StackedSignal out = in.x_t;
  out += apply_Lt(residual, sde_, in.t);
  return out;
}

namespace {

// Network input and candidate targets for one draw.
struct PreparedDraw {
  StackedSignal x;
  std::vector<StackedSignal> targets;  // one per permutation for boundary draws
  std::vector<Permutation> perms;
  double t = 0.0;
};

PreparedDraw prepare(const SdeParams& p, const LossDraw& d) {
  PreparedDraw out;
  const std::size_t k = d.s.num_sources();
  if (!d.z.same_shape(d.s)) throw InvalidArgument("LossDraw: noise shape mismatch");
  if (d.boundary) {
    out.t = p.t_max();
    out.x = stack_mixture(d.y, k);
    out.x += apply_Lt(d.z, p, out.t);
    out.perms = all_permutations(k);
    for (const Permutation& a : out.perms) {
      out.targets.push_back(marginal_mean(apply_permutation(d.s, a), d.y, p, out.t));
    }
  } else {
    out.t = d.t;
    out.targets.push_back(marginal_mean(d.s, d.y, p, out.t));
    out.perms.push_back(Permutation::identity(k));
    out.x = out.targets.front();
    out.x += apply_Lt(d.z, p, out.t);
  }
  return out;
}

// Whitened error r = L_t^-1 (D - target) for the best target.
struct Scored {
  StackedSignal whitened;
  double loss;
  std::size_t best;
};

Scored score(const SdeParams& p, const PreparedDraw& d, const StackedSignal& denoised) {
  const double km = static_cast<double>(denoised.size());
  Scored best{StackedSignal(), std::numeric_limits<double>::infinity(), 0};
  for (std::size_t i = 0; i < d.targets.size(); ++i) {
    StackedSignal r = apply_Lt_inverse(denoised - d.targets[i], p, d.t);
    const double loss = squared_norm(r) / km;
    // Strict comparison keeps the first (lexicographically smallest) minimizer.
    if (loss < best.loss) best = {std::move(r), loss, i};
  }
  if (!std::isfinite(best.loss)) throw NumericalError("loss: non-finite value");
  return best;
}

struct BatchPass {
  std::vector<PreparedDraw> prepared;
  std::vector<Eigen::Index> offsets;  // first frame column of each draw
  MlpTrace trace;
};

BatchPass forward_batch(const NeuralDenoiser& net, std::span<const LossDraw> draws, int jobs) {
  const SdeParams& p = net.sde();
  BatchPass pass;
  pass.prepared.resize(draws.size());
  std::vector<Eigen::MatrixXd> feats(draws.size());
  parallel_for(draws.size(), jobs, [&](std::size_t i) {
    pass.prepared[i] = prepare(p, draws[i]);
    const double cond = noise_conditioning(p, pass.prepared[i].t, net.config().conditioning);
    feats[i] = net.features(pass.prepared[i].x, cond, draws[i].y);
  });
  Eigen::Index cols = 0;
  for (const auto& f : feats) {
    pass.offsets.push_back(cols);
    cols += f.cols();
  }
  Eigen::MatrixXd all(net.config().input_dim(), cols);
  for (std::size_t i = 0; i < feats.size(); ++i) {
    all.middleCols(pass.offsets[i], feats[i].cols()) = feats[i];
  }
  pass.trace = net.forward_frames(std::move(all));
  return pass;
}

}  // namespace

DrawLoss draw_loss(const Denoiser& model, const LossDraw& draw) {
  const SdeParams& p = model.sde();
  const PreparedDraw d = prepare(p, draw);
  const StackedSignal denoised = model.denoise({d.x, d.t, draw.y});
  const Scored s = score(p, d, denoised);
  return {s.loss, d.perms[s.best]};
}

double batch_loss_and_grad(const NeuralDenoiser& net, std::span<const LossDraw> draws,
                           TensorList& grads, int jobs) {
  if (draws.empty()) throw InvalidArgument("batch_loss_and_grad: empty batch");
  const SdeParams& p = net.sde();
  BatchPass pass = forward_batch(net, draws, jobs);
  const double inv_batch = 1.0 / static_cast<double>(draws.size());
  std::vector<double> losses(draws.size());
  Eigen::MatrixXd grad_out(pass.trace.output.rows(), pass.trace.output.cols());
  parallel_for(draws.size(), jobs, [&](std::size_t i) {
    const PreparedDraw& d = pass.prepared[i];
    const Eigen::Index frames = (i + 1 < draws.size() ? pass.offsets[i + 1]
                                                      : pass.trace.output.cols()) -
                                pass.offsets[i];
    const StackedSignal residual = net.residual_from_output(
        pass.trace.output.middleCols(pass.offsets[i], frames), d.x.num_samples());
    StackedSignal denoised = d.x;
    denoised += apply_Lt(residual, p, d.t);
    const Scored s = score(p, d, denoised);
    losses[i] = s.loss;
    // D = x + L_t F gives L_t^-1 (D - target) = L_t^-1 (x - target) + F, so
    // dℓ/dF = 2 r / (K M).
    StackedSignal g = s.whitened;
    g *= 2.0 / static_cast<double>(g.size());
    grad_out.middleCols(pass.offsets[i], frames) = net.output_gradient(g);
  });
  net.backward_frames(pass.trace, grad_out, grads, inv_batch);
  double total = 0.0;
  for (double l : losses) total += l;
  return total * inv_batch;
}

namespace {

double batch_loss(const NeuralDenoiser& net, std::span<const LossDraw> draws) {
  const BatchPass pass = forward_batch(net, draws, 1);
  double total = 0.0;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    const PreparedDraw& d = pass.prepared[i];
    const Eigen::Index end =
        i + 1 < draws.size() ? pass.offsets[i + 1] : pass.trace.output.cols();
    const StackedSignal residual = net.residual_from_output(
        pass.trace.output.middleCols(pass.offsets[i], end - pass.offsets[i]),
        d.x.num_samples());
    StackedSignal denoised = d.x;
    denoised += apply_Lt(residual, net.sde(), d.t);
    total += score(net.sde(), d, denoised).loss;
  }
  return total / static_cast<double>(draws.size());
}

}  // namespace

double grad_check(const NeuralDenoiser& net, std::span<const LossDraw> probe_batch,
                  const GradCheckOptions& opts) {
  TensorList analytic = zeros_like(net.params());
  batch_loss_and_grad(net, probe_batch, analytic, 1);
  if (opts.corrupt) opts.corrupt(analytic);

  NeuralDenoiser probe = net;
  const std::size_t n_total = total_size(net.params());
  Rng rng = make_rng(opts.seed, Stream::kProbe, 0);
  std::uniform_int_distribution<std::size_t> pick(0, n_total - 1);

  double worst = 0.0;
  for (int i = 0; i < opts.num_params; ++i) {
    std::size_t flat = pick(rng);
    std::size_t tensor = 0;
    while (flat >= probe.params()[tensor].values.size()) {
      flat -= probe.params()[tensor].values.size();
      ++tensor;
    }
    double& slot = probe.mutable_params()[tensor].values[flat];
    const double saved = slot;
    slot = saved + opts.step;
    const double plus = batch_loss(probe, probe_batch);
    slot = saved - opts.step;
    const double minus = batch_loss(probe, probe_batch);
    slot = saved;
    const double numeric = (plus - minus) / (2.0 * opts.step);
    const double a = analytic[tensor].values[flat];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace edsep
