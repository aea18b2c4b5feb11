#include <gtest/gtest.h>

#include <cmath>

#include "edsep/data.hpp"
#include "edsep/denoise.hpp"
#include "edsep/error.hpp"
#include "edsep/eval.hpp"
#include "edsep/sample.hpp"
#include "helpers.hpp"

using namespace edsep;
using edsep::testing::max_abs_diff;
using edsep::testing::random_stack;

namespace {

Signal mixture(std::size_t m, std::uint64_t seed) {
  const StackedSignal s = random_stack(2, m, seed, 0.1);
  return s.row_sum();
}

}  // namespace

TEST(Sampler, TimeGrid) {
  SamplerConfig cfg;
  const TimeGrid g = build_time_grid(SdeParams(), cfg);
  ASSERT_EQ(g.times.size(), 30u);
  EXPECT_EQ(g.times.front(), 1.0);
  EXPECT_EQ(g.times.back(), 0.03);
  for (std::size_t i = 1; i < g.times.size(); ++i) EXPECT_LT(g.times[i], g.times[i - 1]);
  cfg.n_steps = 0;
  EXPECT_THROW(build_time_grid(SdeParams(), cfg), InvalidArgument);
}

TEST(Sampler, NamesRoundTrip) {
  for (SamplerKind k : {SamplerKind::kAlgorithm1, SamplerKind::kOde, SamplerKind::kReverseEm}) {
    EXPECT_EQ(sampler_from_string(to_string(k)), k);
  }
  EXPECT_THROW(sampler_from_string("heun"), InvalidArgument);
}

TEST(Sampler, DenoiserCallCounts) {
  const GaussianOracleDenoiser oracle({0.1}, SdeParams());
  const Signal y = mixture(64, 1);
  SamplerConfig cfg;
  Rng rng = make_rng(1, Stream::kSampler, 0);
  {
    CountingDenoiser counter(oracle);
    stochastic_sample(counter, y, 2, cfg, rng);
    EXPECT_EQ(counter.calls(), 58u);
  }
  {
    CountingDenoiser counter(oracle);
    cfg.reuse_denoise = true;
    stochastic_sample(counter, y, 2, cfg, rng);
    EXPECT_EQ(counter.calls(), 29u);
  }
  for (SamplerKind k : {SamplerKind::kOde, SamplerKind::kReverseEm}) {
    CountingDenoiser counter(oracle);
    cfg.kind = k;
    separate(counter, y, 2, cfg, rng);
    EXPECT_EQ(counter.calls(), 29u);
  }
}

TEST(Sampler, MeanCorrectionRestoresTheMixture) {
  const SdeParams p;
  const Signal y = mixture(32, 2);
  const StackedSignal x = random_stack(2, 32, 3);
  const StackedSignal c = mean_correction(x, y, p);
  EXPECT_LT(max_abs_diff(project_mean(c), stack_mixture(y, 2)), 1e-15);
  StackedSignal expect = project_residual(x);
  expect *= std::exp(p.gamma() * p.t_eps());
  EXPECT_LT(max_abs_diff(project_residual(c), expect), 1e-15);
  EXPECT_NEAR(std::exp(p.gamma() * p.t_eps()), 1.0618365465, 1e-10);
}

TEST(Sampler, OutputsSumToTheMixture) {
  const GaussianOracleDenoiser oracle({0.1}, SdeParams());
  const Signal y = mixture(128, 4);
  for (SamplerKind k : {SamplerKind::kAlgorithm1, SamplerKind::kOde, SamplerKind::kReverseEm}) {
    SamplerConfig cfg;
    cfg.kind = k;
    Rng rng = make_rng(5, Stream::kSampler, 0);
    const StackedSignal out = separate(oracle, y, 2, cfg, rng);
    const Signal sum = out.row_sum();
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(sum[i], y[i], 1e-12);
  }
}

TEST(Sampler, ObserverSeesEveryStage) {
  const GaussianOracleDenoiser oracle({0.1}, SdeParams());
  const Signal y = mixture(16, 6);
  int init = 0;
  int noise = 0;
  int drift = 0;
  Rng rng = make_rng(1, Stream::kSampler, 0);
  SamplerConfig cfg;
  cfg.n_steps = 5;
  stochastic_sample(oracle, y, 2, cfg, rng, [&](const char* stage, double, const StackedSignal&) {
    const std::string s = stage;
    init += s == "init";
    noise += s == "post_noise";
    drift += s == "post_drift";
  });
  EXPECT_EQ(init, 1);
  EXPECT_EQ(noise, 5);
  EXPECT_EQ(drift, 5);
}

TEST(Sampler, ParallelRunsMatchSerial) {
  const GaussianOracleDenoiser oracle({0.1}, SdeParams());
  const Signal y = mixture(64, 7);
  SamplerConfig cfg;
  const auto a = separate_many(oracle, [&](std::size_t) { return y; }, 6, 2, cfg, 9, 1);
  const auto b = separate_many(oracle, [&](std::size_t) { return y; }, 6, 2, cfg, 9, 3);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
  EXPECT_NE(a[0], a[1]);
}

TEST(Sampler, ScoreOfTheMarginalMean) {
  const SdeParams p;
  const StackedSignal x = random_stack(2, 8, 8);
  const StackedSignal d = random_stack(2, 8, 9);
  const StackedSignal score = score_from_denoised(p, x, d, 0.5);
  EXPECT_LT(max_abs_diff(apply_Sigma(score, p, 0.5), d - x), 1e-12);
}

TEST(Sampler, OdeTracksStochasticOnGaussianOracle) {
  data::DatasetSpec spec;
  spec.kind = data::Kind::kGaussian;
  spec.num_samples = 1000;
  spec.seed = 4;
  const GaussianOracleDenoiser oracle({0.1}, SdeParams());
  std::vector<double> stochastic;
  std::vector<double> ode;
  for (std::size_t i = 0; i < 200; ++i) {
    const data::SourcePair p = data::generate_pair(spec, i);
    SamplerConfig cfg;
    Rng r1 = make_rng(5, Stream::kSampler, i);
    stochastic.push_back(pit_eval(stochastic_sample(oracle, p.y, 2, cfg, r1), p.s).mean_db);
    cfg.kind = SamplerKind::kOde;
    Rng r2 = make_rng(5, Stream::kSampler, i);
    ode.push_back(pit_eval(ode_sample(oracle, p.y, 2, cfg, r2), p.s).mean_db);
  }
  EXPECT_NEAR(median(ode), median(stochastic), 3.0);
}
