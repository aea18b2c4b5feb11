#include <gtest/gtest.h>

#include <cmath>

#include "edsep/denoise.hpp"
#include "edsep/error.hpp"
#include "helpers.hpp"

using namespace edsep;
using edsep::testing::max_abs_diff;
using edsep::testing::random_stack;

namespace {

// Returns μ_t + L_t u for a known source stack, whatever x_t is.
class ShiftedMeanDenoiser final : public Denoiser {
 public:
  ShiftedMeanDenoiser(StackedSignal s, StackedSignal u) : s_(std::move(s)), u_(std::move(u)) {}
  StackedSignal denoise(const DenoiserInput& in) const override {
    StackedSignal out = marginal_mean(s_, in.y, p_, in.t);
    out += apply_Lt(u_, p_, in.t);
    return out;
  }
  const SdeParams& sde() const override { return p_; }

 private:
  SdeParams p_;
  StackedSignal s_;
  StackedSignal u_;
};

NetworkConfig small_config() {
  NetworkConfig cfg;
  cfg.hidden = {8, 6};
  return cfg;
}

std::vector<LossDraw> probe_draws(std::size_t m, std::uint64_t seed) {
  std::vector<LossDraw> out;
  for (int i = 0; i < 3; ++i) {
    LossDraw d;
    d.s = random_stack(2, m, seed + i, 0.1);
    d.y = d.s.row_sum();
    d.t = 0.1 + 0.3 * i;
    d.z = random_stack(2, m, seed + 10 + i);
    d.boundary = i == 2;
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace

TEST(Denoise, OracleGainAndConditioning) {
  const SdeParams p;
  EXPECT_NEAR(oracle_gain({1.0}, p, 1.0), 0.1204327113, 1e-9);
  EXPECT_NEAR(noise_conditioning(p, 1.0, NoiseConditioning::kLogHalfSigma), -0.8402161271, 1e-9);
  EXPECT_NEAR(noise_conditioning(p, 1.0, NoiseConditioning::kHalfLogSigma), -0.0735344733, 1e-9);
}

TEST(Denoise, OracleKeepsTheMixtureMean) {
  const SdeParams p;
  const GaussianOracleDenoiser oracle({0.1}, p);
  const StackedSignal s = random_stack(2, 64, 1, 0.1);
  const Signal y = s.row_sum();
  Rng rng = make_rng(1, Stream::kMarginal, 0);
  const StackedSignal x = sample_marginal(s, y, p, 0.5, rng);
  const StackedSignal d = oracle.denoise({x, 0.5, y});
  EXPECT_LT(max_abs_diff(project_mean(d), stack_mixture(y, 2)), 1e-14);
  const double kappa = oracle_gain({0.1}, p, 0.5);
  StackedSignal expect = stack_mixture(y, 2);
  expect.add_scaled(project_residual(x), kappa);
  EXPECT_LT(max_abs_diff(d, expect), 1e-14);
}

TEST(Denoise, InputValidation) {
  const GaussianOracleDenoiser oracle({0.1}, SdeParams());
  const StackedSignal x = random_stack(2, 8, 2);
  const Signal y(8, 0.0);
  EXPECT_THROW(oracle.denoise({x, 0.01, y}), InvalidArgument);
  EXPECT_THROW(oracle.denoise({x, 1.5, y}), InvalidArgument);
  EXPECT_THROW(oracle.denoise({x, 0.5, Signal(7, 0.0)}), InvalidArgument);
}

TEST(Denoise, LossCalibration) {
  const std::size_t m = 32;
  const StackedSignal s = random_stack(2, m, 3, 0.1);
  StackedSignal u = random_stack(2, m, 4);
  u *= 1.0 / std::sqrt(squared_norm(u));
  LossDraw d{s, s.row_sum(), 0.4, random_stack(2, m, 5), false};
  const ShiftedMeanDenoiser shifted(s, u);
  EXPECT_NEAR(draw_loss(shifted, d).loss, 1.0 / (2.0 * m), 1e-14);
  const ShiftedMeanDenoiser exact(s, StackedSignal(2, m));
  EXPECT_EQ(draw_loss(exact, d).loss, 0.0);
}

TEST(Denoise, BoundaryLossPicksTheBestRelabeling) {
  const std::size_t m = 16;
  const StackedSignal s = random_stack(2, m, 6, 0.1);
  const Permutation swap({1, 0});
  // A denoiser that returns μ_T of the swapped sources.
  const ShiftedMeanDenoiser swapped(apply_permutation(s, swap), StackedSignal(2, m));
  LossDraw d{s, s.row_sum(), 1.0, random_stack(2, m, 7), true};
  const DrawLoss l = draw_loss(swapped, d);
  EXPECT_EQ(l.loss, 0.0);
  EXPECT_EQ(l.chosen, swap);
}

TEST(Denoise, NetworkLayoutAndShapes) {
  const NetworkConfig cfg = small_config();
  EXPECT_EQ(cfg.input_dim(), 3 * 2 * 256 + 1);
  EXPECT_EQ(cfg.output_dim(), 2 * 2 * 256);
  const TensorList layout = NeuralDenoiser::layout(cfg);
  ASSERT_EQ(layout.size(), 6u);
  EXPECT_EQ(layout[0].name, "layer0.weight");
  EXPECT_EQ(layout[0].shape, (std::vector<std::size_t>{8, 1537}));
  EXPECT_EQ(layout[5].shape, (std::vector<std::size_t>{1024}));
  TensorList bad = layout;
  bad[2].values.pop_back();
  bad[2].shape = {5, 8};
  EXPECT_THROW(NeuralDenoiser(cfg, SdeParams(), bad), InvalidArgument);
}

TEST(Denoise, ZeroNetworkIsTheSkipConnection) {
  NeuralDenoiser net(small_config(), SdeParams(), 1);
  net.set_zero();
  const StackedSignal x = random_stack(2, 700, 8);
  const StackedSignal noise = random_stack(1, 700, 9);
  const Signal y(noise.row(0).begin(), noise.row(0).end());
  EXPECT_EQ(net.denoise({x, 0.5, y}), x);
}

TEST(Denoise, GradientCheck) {
  const NeuralDenoiser net(small_config(), SdeParams(), 3);
  const auto draws = probe_draws(600, 20);
  EXPECT_LT(grad_check(net, draws, {200, 1e-5, 1, {}}), 1e-4);
}

TEST(Denoise, GradientCheckDetectsCorruption) {
  const NeuralDenoiser net(small_config(), SdeParams(), 3);
  const auto draws = probe_draws(600, 20);
  GradCheckOptions opts;
  opts.num_params = 50;
  opts.corrupt = [](TensorList& g) {
    for (Tensor& t : g) {
      for (double& v : t.values) v *= 1.01;
    }
  };
  EXPECT_GT(grad_check(net, draws, opts), 1e-3);
}

TEST(Denoise, SinglePrecisionStaysClose) {
  NetworkConfig cfg = small_config();
  const NeuralDenoiser a(cfg, SdeParams(), 4);
  cfg.precision = Precision::kF32;
  const NeuralDenoiser b(cfg, SdeParams(), a.params());
  const StackedSignal x = random_stack(2, 600, 10, 0.3);
  const Signal y = x.row_sum();
  const StackedSignal da = a.denoise({x, 0.3, y});
  const StackedSignal db = b.denoise({x, 0.3, y});
  EXPECT_LT(max_abs_diff(da, db), 1e-4);
}

TEST(Denoise, BatchGradientDoesNotDependOnJobs) {
  const NeuralDenoiser net(small_config(), SdeParams(), 5);
  const auto draws = probe_draws(600, 30);
  TensorList g1 = zeros_like(net.params());
  TensorList g4 = zeros_like(net.params());
  const double l1 = batch_loss_and_grad(net, draws, g1, 1);
  const double l4 = batch_loss_and_grad(net, draws, g4, 4);
  EXPECT_EQ(l1, l4);
  for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_EQ(g1[i].values, g4[i].values);
}
