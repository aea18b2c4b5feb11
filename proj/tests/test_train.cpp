#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <cstring>

#include "edsep/data.hpp"
#include "edsep/denoise.hpp"
#include "edsep/train.hpp"
#include "helpers.hpp"

using namespace edsep;
using edsep::testing::random_stack;

namespace {

NetworkConfig tiny_net() {
  NetworkConfig cfg;
  cfg.hidden = {12};
  return cfg;
}

data::DatasetSpec gaussian_spec(std::size_t m) {
  data::DatasetSpec spec;
  spec.kind = data::Kind::kGaussian;
  spec.num_samples = m;
  spec.count = 32;
  spec.seed = 5;
  return spec;
}

std::vector<data::SourcePair> make_batch(const data::DatasetSpec& spec, std::size_t n) {
  std::vector<data::SourcePair> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(data::generate_pair(spec, i));
  return out;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("edsep_train_" + name);
}

bool same_params(const TrainState& a, const TrainState& b) {
  const auto eq = [](const TensorList& x, const TensorList& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i].values != y[i].values || x[i].shape != y[i].shape) return false;
    }
    return true;
  };
  return eq(a.net.params(), b.net.params()) && eq(a.moments.first, b.moments.first) &&
         eq(a.moments.second, b.moments.second) && a.step == b.step && a.seed == b.seed;
}

}  // namespace

TEST(Adam, FirstStepMovesByTheLearningRate) {
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  TensorList params = {{"w", {3}, {1.0, 2.0, 3.0}}};
  const TensorList grads = {{"w", {3}, {0.5, -2.0, 0.0}}};
  AdamMoments m{zeros_like(params), zeros_like(params)};
  adam_update(params, grads, m, cfg, 1);
  EXPECT_NEAR(params[0].values[0], 1.0 - 0.01 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(params[0].values[1], 2.0 + 0.01 * 2.0 / (2.0 + 1e-8), 1e-15);
  EXPECT_EQ(params[0].values[2], 3.0);
}

TEST(Adam, ZeroGradientDecaysMoments) {
  TrainConfig cfg;
  TensorList params = {{"w", {2}, {1.0, -1.0}}};
  const TensorList zero = zeros_like(params);
  AdamMoments m{{{"w", {2}, {0.0, 0.0}}}, {{"w", {2}, {0.0, 0.0}}}};
  adam_update(params, zero, m, cfg, 1);
  EXPECT_EQ(params[0].values, (std::vector<double>{1.0, -1.0}));
  m.first[0].values = {1.0, 1.0};
  adam_update(params, zero, m, cfg, 2);
  EXPECT_DOUBLE_EQ(m.first[0].values[0], 0.9);
}

TEST(Adam, RejectsBadInput) {
  TrainConfig cfg;
  TensorList params = {{"w", {1}, {1.0}}};
  AdamMoments m{zeros_like(params), zeros_like(params)};
  EXPECT_THROW(adam_update(params, {{"w", {1}, {NAN}}}, m, cfg, 1), NumericalError);
  EXPECT_THROW(adam_update(params, {{"w", {2}, {1.0, 1.0}}}, m, cfg, 1), InvalidArgument);
  EXPECT_THROW(adam_update(params, {{"w", {1}, {1.0}}}, m, cfg, 0), InvalidArgument);
}

TEST(TrainConfigTest, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.p_boundary = 1.5;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg.p_boundary = 0.1;
  cfg.learning_rate = 0.0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg.learning_rate = 1e-4;
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
}

TEST(DsmLoss, OracleMatchesClosedForm) {
  const SdeParams p;
  const double sigma_s = 0.1;
  const GaussianOracleDenoiser oracle({sigma_s}, p);
  data::DatasetSpec spec = gaussian_spec(8);
  spec.sigma_s = sigma_s;
  const double t = 1.0;
  const double kappa = oracle_gain({sigma_s}, p, t);
  const double lambda2 = noise_scales(p, t).lambda2;
  const double signal = std::exp(-2.0 * p.gamma() * t) * sigma_s * sigma_s;
  // Per residual dimension, divided by K M with M (K - 1) residual dimensions.
  const double per_dim = ((kappa - 1) * (kappa - 1) * signal + kappa * kappa * lambda2) / lambda2;
  const double expected = per_dim * 8.0 * 1.0 / 16.0;
  Rng rng = make_rng(2, Stream::kTrain, 0);
  double total = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const data::SourcePair pair = data::generate_pair(spec, static_cast<std::size_t>(i));
    total += dsm_loss(oracle, pair.s, pair.y, t, rng).loss;
  }
  EXPECT_NEAR(total / n, expected, 0.05 * expected);
}

TEST(DsmLoss, RejectsOutOfRangeTime) {
  const GaussianOracleDenoiser oracle({0.1}, SdeParams());
  const StackedSignal s = random_stack(2, 8, 1);
  Rng rng = make_rng(1, Stream::kTrain, 0);
  EXPECT_THROW(dsm_loss(oracle, s, s.row_sum(), 0.0, rng), InvalidArgument);
}

TEST(BoundaryLoss, InvariantUnderRelabeling) {
  const GaussianOracleDenoiser oracle({0.1}, SdeParams());
  for (int trial = 0; trial < 20; ++trial) {
    const StackedSignal s = random_stack(3, 16, 100 + trial, 0.1);
    for (const Permutation& a : all_permutations(3)) {
      Rng r1 = make_rng(trial, Stream::kTrain, 0);
      Rng r2 = make_rng(trial, Stream::kTrain, 0);
      const StackedSignal sa = apply_permutation(s, a);
      EXPECT_EQ(boundary_pit_loss(oracle, s, s.row_sum(), r1).loss,
                boundary_pit_loss(oracle, sa, s.row_sum(), r2).loss);
    }
  }
}

TEST(TrainStep, BranchProbabilityExtremes) {
  const data::DatasetSpec spec = gaussian_spec(600);
  const auto batch = make_batch(spec, 4);
  TrainConfig cfg;
  cfg.batch_size = 4;
  TrainState state(NeuralDenoiser(tiny_net(), SdeParams(), 1), 7);
  std::size_t boundary = 0;
  std::size_t standard = 0;
  cfg.p_boundary = 0.0;
  for (int i = 0; i < 250; ++i) {
    for (const LossDraw& d : draw_batch(state, batch, cfg)) (d.boundary ? boundary : standard)++;
    ++state.step;
  }
  EXPECT_EQ(boundary, 0u);
  cfg.p_boundary = 1.0;
  standard = 0;
  for (int i = 0; i < 250; ++i) {
    for (const LossDraw& d : draw_batch(state, batch, cfg)) {
      (d.boundary ? boundary : standard)++;
      if (d.boundary) EXPECT_EQ(d.t, 1.0);
    }
    ++state.step;
  }
  EXPECT_EQ(standard, 0u);
  EXPECT_EQ(boundary, 1000u);
}

TEST(TrainStep, CropsSegments) {
  const data::DatasetSpec spec = gaussian_spec(2000);
  const auto batch = make_batch(spec, 2);
  TrainConfig cfg;
  cfg.segment_samples = 700;
  TrainState state(NeuralDenoiser(tiny_net(), SdeParams(), 1), 7);
  for (const LossDraw& d : draw_batch(state, batch, cfg)) {
    EXPECT_EQ(d.s.num_samples(), 700u);
    EXPECT_EQ(d.y.size(), 700u);
    const Signal sum = d.s.row_sum();
    for (std::size_t i = 0; i < sum.size(); ++i) EXPECT_NEAR(sum[i], d.y[i], 1e-15);
  }
}

TEST(Checkpoint, RoundTripAndResume) {
  const data::DatasetSpec spec = gaussian_spec(600);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e-3;
  cfg.total_steps = 10;
  cfg.checkpoint_interval = 0;
  const PairSource source = [&](std::size_t i) { return data::generate_pair(spec, i); };

  TrainState full(NeuralDenoiser(tiny_net(), SdeParams(), 3), 11);
  train_loop(full, cfg, source, spec.count, nullptr);

  TrainState part(NeuralDenoiser(tiny_net(), SdeParams(), 3), 11);
  cfg.total_steps = 4;
  train_loop(part, cfg, source, spec.count, nullptr);
  const auto path = temp_file("resume.edsp");
  save_checkpoint(part, path);
  TrainState resumed = load_checkpoint(path);
  EXPECT_TRUE(same_params(part, resumed));
  cfg.total_steps = 10;
  train_loop(resumed, cfg, source, spec.count, nullptr);
  EXPECT_TRUE(same_params(full, resumed));
}

TEST(Checkpoint, DistinctErrors) {
  TrainState state(NeuralDenoiser(tiny_net(), SdeParams(), 3), 11);
  const auto path = temp_file("errors.edsp");
  save_checkpoint(state, path);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    bytes = ss.str();
  }
  const auto write = [&](const std::string& name, const std::string& content) {
    const auto p = temp_file(name);
    std::ofstream out(p, std::ios::binary);
    out << content;
    return p;
  };
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(load_checkpoint(write("magic.edsp", bad_magic)), CheckpointFormatError);
  std::string bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(load_checkpoint(write("version.edsp", bad_version)), CheckpointVersionError);
  EXPECT_THROW(load_checkpoint(write("trunc.edsp", bytes.substr(0, bytes.size() - 100))),
               CheckpointTruncatedError);

  std::uint64_t len_a = 0;
  std::memcpy(&len_a, bytes.data() + 8, 8);
  std::string header_a = bytes.substr(16, len_a);
  // Architecture unchanged, one directory shape edited.
  const auto shape_pos = header_a.find("\"shape\":[12,");
  ASSERT_NE(shape_pos, std::string::npos);
  header_a.replace(shape_pos, 12, "\"shape\":[11,");
  std::string spliced = bytes.substr(0, 16) + header_a + bytes.substr(16 + len_a);
  EXPECT_THROW(load_checkpoint(write("shape.edsp", spliced)), CheckpointShapeError);
}

TEST(Training, BeatsTheSkipConnection) {
  const data::DatasetSpec spec = gaussian_spec(600);
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.learning_rate = 1e-3;
  cfg.total_steps = 300;
  cfg.checkpoint_interval = 0;
  const PairSource source = [&](std::size_t i) { return data::generate_pair(spec, i); };
  NeuralDenoiser zero(tiny_net(), SdeParams(), 3);
  zero.set_zero();
  TrainState state(NeuralDenoiser(tiny_net(), SdeParams(), 3), 2);
  const double ema = train_loop(state, cfg, source, spec.count, nullptr);

  // Zero-network loss on the same kind of draws.
  TrainState probe(zero, 99);
  const auto batch = make_batch(spec, 32);
  TrainConfig pcfg = cfg;
  pcfg.batch_size = 32;
  TensorList g = zeros_like(zero.params());
  const double baseline = batch_loss_and_grad(zero, draw_batch(probe, batch, pcfg), g);
  EXPECT_LT(ema, baseline);
}
