#include "edsep/train.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <ostream>
#include <random>
#include <string>

#include "json.hpp"

#include "edsep/config.hpp"
#include "edsep/parallel.hpp"

namespace edsep {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written in native byte order");

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("TrainConfig: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw InvalidArgument("TrainConfig: learning_rate must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw InvalidArgument("TrainConfig: Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw InvalidArgument("TrainConfig: adam_eps must be > 0");
  if (!(p_boundary >= 0.0 && p_boundary <= 1.0)) {
    throw InvalidArgument("TrainConfig: p_T must lie in [0, 1]");
  }
  if (jobs < 1) throw InvalidArgument("TrainConfig: jobs must be >= 1");
}

DrawLoss dsm_loss(const Denoiser& model, const StackedSignal& s, std::span<const double> y,
                  double t, Rng& rng) {
  const SdeParams& p = model.sde();
  if (!(t >= p.t_eps() && t <= p.t_max())) {
    throw InvalidArgument("dsm_loss: t=" + std::to_string(t) + " outside [t_eps, T]");
  }
  require_mixture_consistent(s, y);
  LossDraw draw{s, Signal(y.begin(), y.end()), t,
                normal_stacked(s.num_sources(), s.num_samples(), rng), false};
  return draw_loss(model, draw);
}

DrawLoss boundary_pit_loss(const Denoiser& model, const StackedSignal& s,
                           std::span<const double> y, Rng& rng) {
  if (s.num_sources() > 6) throw InvalidArgument("boundary_pit_loss: K must be <= 6");
  require_mixture_consistent(s, y);
  LossDraw draw{s, Signal(y.begin(), y.end()), model.sde().t_max(),
                normal_stacked(s.num_sources(), s.num_samples(), rng), true};
  return draw_loss(model, draw);
}

void adam_update(TensorList& params, const TensorList& grads, AdamMoments& moments,
                 const TrainConfig& cfg, std::uint64_t step) {
  if (step < 1) throw InvalidArgument("adam_update: step counts from 1");
  if (grads.size() != params.size() || moments.first.size() != params.size() ||
      moments.second.size() != params.size()) {
    throw InvalidArgument("adam_update: tensor count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::size_t n = params[i].values.size();
    if (grads[i].values.size() != n || moments.first[i].values.size() != n ||
        moments.second[i].values.size() != n) {
      throw InvalidArgument("adam_update: shape mismatch in " + params[i].name);
    }
    for (double g : grads[i].values) {
      if (!std::isfinite(g)) {
        throw NumericalError("adam_update: non-finite gradient in " + params[i].name);
      }
    }
  }
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i].values;
    const auto& g = grads[i].values;
    auto& m = moments.first[i].values;
    auto& v = moments.second[i].values;
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      w[j] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
  }
}

TrainState::TrainState(NeuralDenoiser net_in, std::uint64_t seed_in)
    : net(std::move(net_in)),
      moments{zeros_like(net.params()), zeros_like(net.params())},
      seed(seed_in) {}

TrainState::TrainState(NeuralDenoiser net_in, AdamMoments moments_in, std::uint64_t step_in,
                       std::uint64_t seed_in)
    : net(std::move(net_in)), moments(std::move(moments_in)), step(step_in), seed(seed_in) {}

std::vector<LossDraw> draw_batch(const TrainState& state, std::span<const data::SourcePair> batch,
                                 const TrainConfig& cfg) {
  const SdeParams& p = state.net.sde();
  Rng rng = make_rng(state.seed, Stream::kTrain, state.step);
  std::vector<LossDraw> draws;
  draws.reserve(batch.size());
  for (const data::SourcePair& pair : batch) {
    const bool boundary = uniform01(rng) < cfg.p_boundary;
    const double t = p.t_eps() + (p.t_max() - p.t_eps()) * uniform01(rng);

    const std::size_t k = pair.s.num_sources();
    const std::size_t m = pair.s.num_samples();
    std::size_t len = m;
    std::size_t offset = 0;
    if (cfg.segment_samples > 0 && cfg.segment_samples < m) {
      len = cfg.segment_samples;
      offset = std::uniform_int_distribution<std::size_t>(0, m - len)(rng);
    }
    LossDraw d;
    d.s = StackedSignal(k, len);
    for (std::size_t r = 0; r < k; ++r) {
      const auto src = pair.s.row(r);
      std::copy(src.begin() + offset, src.begin() + offset + len, d.s.row(r).begin());
    }
    d.y.assign(pair.y.begin() + offset, pair.y.begin() + offset + len);
    d.boundary = boundary;
    d.t = boundary ? p.t_max() : t;
    d.z = normal_stacked(k, len, rng);
    draws.push_back(std::move(d));
  }
  return draws;
}

StepResult train_step(TrainState& state, std::span<const data::SourcePair> batch,
                      const TrainConfig& cfg) {
  if (batch.empty()) throw InvalidArgument("train_step: empty batch");
  const std::vector<LossDraw> draws = draw_batch(state, batch, cfg);
  StepResult result;
  for (const LossDraw& d : draws) (d.boundary ? result.boundary : result.standard)++;

  TensorList grads = zeros_like(state.net.params());
  try {
    result.loss = batch_loss_and_grad(state.net, draws, grads, cfg.jobs);
  } catch (const NumericalError& ex) {
    throw NumericalError("train_step " + std::to_string(state.step) + ": " + ex.what());
  }
  if (!std::isfinite(result.loss)) {
    throw NumericalError("train_step " + std::to_string(state.step) + ": non-finite loss");
  }
  adam_update(state.net.mutable_params(), grads, state.moments, cfg, state.step + 1);
  ++state.step;
  return result;
}

std::vector<std::size_t> batch_indices(const TrainState& state, const TrainConfig& cfg,
                                       std::size_t dataset_size) {
  if (dataset_size == 0) throw InvalidArgument("batch_indices: empty dataset");
  Rng rng = make_rng(state.seed, Stream::kBatch, state.step);
  std::uniform_int_distribution<std::size_t> pick(0, dataset_size - 1);
  std::vector<std::size_t> out(cfg.batch_size);
  for (auto& i : out) i = pick(rng);
  return out;
}

double train_loop(TrainState& state, const TrainConfig& cfg, const PairSource& source,
                  std::size_t dataset_size, std::ostream* log,
                  const std::filesystem::path& checkpoint_dir, const TrainObserver& observer) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  double ema = std::numeric_limits<double>::quiet_NaN();
  std::vector<data::SourcePair> batch(cfg.batch_size);
  while (state.step < cfg.total_steps) {
    const std::vector<std::size_t> idx = batch_indices(state, cfg, dataset_size);
    for (std::size_t i = 0; i < idx.size(); ++i) batch[i] = source(idx[i]);
    const StepResult r = train_step(state, batch, cfg);
    ema = std::isnan(ema) ? r.loss : 0.99 * ema + 0.01 * r.loss;
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (observer.on_step) observer.on_step(state, r, wall);

    if (log && cfg.log_interval > 0 && state.step % cfg.log_interval == 0) {
      nlohmann::json line;
      line["step"] = state.step;
      line["loss"] = r.loss;
      line["ema_loss"] = ema;
      line["branch"] = {{"standard", r.standard}, {"boundary", r.boundary}};
      line["wallclock"] = wall;
      *log << line.dump() << '\n' << std::flush;
    }
    if (!checkpoint_dir.empty() && cfg.checkpoint_interval > 0 &&
        (state.step % cfg.checkpoint_interval == 0 || state.step == cfg.total_steps)) {
      std::filesystem::create_directories(checkpoint_dir);
      save_checkpoint(state, checkpoint_dir / ("step_" + std::to_string(state.step) + ".edsp"));
      save_checkpoint(state, checkpoint_dir / "latest.edsp");
    }
  }
  return ema;
}

namespace {

constexpr char kMagic[4] = {'E', 'D', 'S', 'P'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool get(std::istream& in, T& v) {
  return static_cast<bool>(in.read(reinterpret_cast<char*>(&v), sizeof(T)));
}

struct Group {
  const char* name;
  const TensorList* tensors;
};

}  // namespace

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  const Group groups[] = {{"param", &state.net.params()},
                          {"adam_m", &state.moments.first},
                          {"adam_v", &state.moments.second}};
  nlohmann::json header;
  header["architecture"] = config::network_to_json(state.net.config());
  header["sde"] = config::to_json(state.net.sde());
  header["step"] = state.step;
  header["seed"] = state.seed;
  nlohmann::json dir = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const Group& g : groups) {
    for (const Tensor& t : *g.tensors) {
      dir.push_back({{"name", t.name}, {"group", g.name}, {"shape", t.shape}, {"offset", offset}});
      offset += t.values.size() * sizeof(double);
    }
  }
  header["tensors"] = dir;
  const std::string text = header.dump();

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("save_checkpoint: cannot open " + tmp.string());
    out.write(kMagic, 4);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const Group& g : groups) {
      for (const Tensor& t : *g.tensors) {
        out.write(reinterpret_cast<const char*>(t.values.data()),
                  static_cast<std::streamsize>(t.values.size() * sizeof(double)));
      }
    }
    if (!out) throw IoError("save_checkpoint: write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("save_checkpoint: cannot rename to " + path.string());
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("load_checkpoint: cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4)) throw CheckpointTruncatedError("checkpoint: missing magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw CheckpointFormatError("checkpoint: bad magic");
  std::uint32_t version = 0;
  if (!get(in, version)) throw CheckpointTruncatedError("checkpoint: missing version");
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError("checkpoint: unsupported version " + std::to_string(version));
  }
  std::uint64_t header_len = 0;
  if (!get(in, header_len)) throw CheckpointTruncatedError("checkpoint: missing header length");
  const std::uint64_t file_size = std::filesystem::file_size(path);
  if (header_len > file_size) throw CheckpointTruncatedError("checkpoint: header truncated");
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) {
    throw CheckpointTruncatedError("checkpoint: header truncated");
  }

  nlohmann::json header;
  NetworkConfig arch;
  SdeParams sde;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  try {
    header = nlohmann::json::parse(text);
    arch = config::network_from_json(header.at("architecture"));
    sde = config::sde_from_json(header.at("sde"));
    step = header.at("step").get<std::uint64_t>();
    seed = header.at("seed").get<std::uint64_t>();
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& ex) {
    throw CheckpointFormatError(std::string("checkpoint: bad header: ") + ex.what());
  }

  const TensorList expected = NeuralDenoiser::layout(arch);
  const char* group_names[] = {"param", "adam_m", "adam_v"};
  const auto& dir = header.at("tensors");
  if (!dir.is_array() || dir.size() != 3 * expected.size()) {
    throw CheckpointShapeError("checkpoint: tensor directory does not match the architecture");
  }
  TensorList lists[3];
  std::size_t entry = 0;
  for (int g = 0; g < 3; ++g) {
    for (const Tensor& want : expected) {
      const auto& d = dir[entry++];
      Tensor t;
      try {
        t.name = d.at("name").get<std::string>();
        t.shape = d.at("shape").get<std::vector<std::size_t>>();
        if (d.at("group").get<std::string>() != group_names[g]) {
          throw CheckpointFormatError("checkpoint: unexpected group for " + t.name);
        }
      } catch (const CheckpointError&) {
        throw;
      } catch (const std::exception& ex) {
        throw CheckpointFormatError(std::string("checkpoint: bad tensor entry: ") + ex.what());
      }
      if (t.name != want.name || t.shape != want.shape) {
        throw CheckpointShapeError("checkpoint: tensor " + t.name + " does not match " +
                                   want.name);
      }
      t.values.resize(want.values.size());
      const auto bytes = static_cast<std::streamsize>(t.values.size() * sizeof(double));
      if (!in.read(reinterpret_cast<char*>(t.values.data()), bytes)) {
        throw CheckpointTruncatedError("checkpoint: data truncated in " + t.name);
      }
      lists[g].push_back(std::move(t));
    }
  }
  NeuralDenoiser net(arch, sde, std::move(lists[0]));
  return TrainState(std::move(net), AdamMoments{std::move(lists[1]), std::move(lists[2])}, step,
                    seed);
}

}  // namespace edsep
