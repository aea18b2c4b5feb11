#include "edsep/cli.hpp"

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include "CLI11.hpp"

#include "edsep/config.hpp"
#include "edsep/data.hpp"
#include "edsep/denoise.hpp"
#include "edsep/dsp.hpp"
#include "edsep/eval.hpp"
#include "edsep/parallel.hpp"
#include "edsep/sample.hpp"
#include "edsep/train.hpp"
#include "edsep/validate.hpp"

namespace edsep::cli {

namespace fs = std::filesystem;

namespace {

class UsageError : public config::ConfigError {
 public:
  using ConfigError::ConfigError;
};

void setup_logging() {
  auto logger = spdlog::get("edsep");
  if (!logger) {
    logger = spdlog::stderr_logger_st("edsep");
    spdlog::set_default_logger(logger);
  }
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("EDSEP_LOG");
  spdlog::set_level(env ? spdlog::level::from_str(env) : spdlog::level::info);
}

struct Globals {
  std::optional<std::string> config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> sampler;
  std::string backend = "neural";
  std::optional<int> steps;
  bool no_mean_correct = false;
  bool reuse_denoise = false;
  std::optional<std::string> out;
  std::optional<std::string> checkpoint;
};

void add_globals(CLI::App* app, Globals& g) {
  app->add_option("--config", g.config, "JSON configuration file");
  app->add_option("--set", g.sets, "Override, section.key=value (repeatable)");
  app->add_option("--seed", g.seed, "Root seed");
  app->add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app->add_option("--sampler", g.sampler, "algorithm1 | ode | reverse-em")
      ->check(CLI::IsMember({"algorithm1", "ode", "reverse-em"}));
  app->add_option("--backend", g.backend, "neural | oracle")
      ->check(CLI::IsMember({"neural", "oracle"}));
  app->add_option("--steps", g.steps, "Sampler steps N")->check(CLI::PositiveNumber);
  app->add_flag("--no-mean-correct", g.no_mean_correct, "Skip the final mean correction");
  app->add_flag("--reuse-denoise", g.reuse_denoise, "One denoiser call per sampler step");
  app->add_option("--out", g.out, "Output directory (paths.out_dir)");
  app->add_option("--checkpoint", g.checkpoint, "Checkpoint file (paths.checkpoint)");
}

config::RunConfig resolve(const Globals& g) {
  std::optional<fs::path> path;
  if (g.config) path = *g.config;
  config::RunConfig cfg = config::load_config(path, g.sets);
  if (g.seed) cfg.seed = *g.seed;
  if (g.jobs) cfg.jobs = *g.jobs;
  cfg.train.jobs = cfg.jobs;
  if (g.sampler) cfg.sample.kind = sampler_from_string(*g.sampler);
  if (g.steps) cfg.sample.n_steps = *g.steps;
  if (g.no_mean_correct) cfg.sample.mean_correct = false;
  if (g.reuse_denoise) cfg.sample.reuse_denoise = true;
  if (g.out) cfg.paths.out_dir = *g.out;
  if (g.checkpoint) cfg.paths.checkpoint = *g.checkpoint;
  return cfg;
}

// Owns whichever backend was requested.
struct Backend {
  std::unique_ptr<GaussianOracleDenoiser> oracle;
  std::unique_ptr<NeuralDenoiser> neural;
  const Denoiser& get() const {
    return oracle ? static_cast<const Denoiser&>(*oracle) : *neural;
  }
};

Backend make_backend(const Globals& g, const config::RunConfig& cfg) {
  Backend b;
  if (g.backend == "oracle") {
    b.oracle = std::make_unique<GaussianOracleDenoiser>(
        GaussianOraclePrior{cfg.data.sigma_s}, cfg.sde);
  } else {
    if (cfg.paths.checkpoint.empty()) {
      throw UsageError("the neural backend needs --checkpoint (or paths.checkpoint)");
    }
    b.neural = std::make_unique<NeuralDenoiser>(load_checkpoint(cfg.paths.checkpoint).net);
  }
  return b;
}

StackedSignal read_stack(const std::vector<fs::path>& paths, int* sample_rate) {
  std::vector<Signal> rows;
  for (const fs::path& p : paths) {
    dsp::WavData w = dsp::read_wav(p);
    if (sample_rate) *sample_rate = w.sample_rate;
    rows.push_back(std::move(w.samples));
  }
  return StackedSignal::from_rows(rows);
}

void write_estimates(const StackedSignal& x, const fs::path& dir, const std::string& stem,
                     int sample_rate) {
  for (std::size_t k = 0; k < x.num_sources(); ++k) {
    dsp::write_wav(dir / (stem + "_s" + std::to_string(k) + ".wav"), x.row(k), sample_rate);
  }
}

int cmd_validate_sde(const config::RunConfig& cfg, std::size_t paths, int em_steps,
                     std::size_t samples) {
  Rng rng = make_rng(cfg.seed, Stream::kEval, 0);
  const StackedSignal s = normal_stacked(cfg.data.num_sources, samples, rng);
  MarginalCheckOptions opts;
  opts.num_paths = paths;
  opts.em_steps = em_steps;
  opts.seed = cfg.seed;
  opts.jobs = cfg.jobs;
  spdlog::info("forward marginal check: {} paths x {} steps, K={}, M={}", paths, em_steps,
               s.num_sources(), samples);
  const std::vector<Check> checks = check_forward_marginal(s, cfg.sde, opts);
  std::cout << format_checks(checks);
  return all_pass(checks) ? kExitOk : kExitValidation;
}

int cmd_gen_data(const config::RunConfig& cfg, std::size_t first) {
  const fs::path out = cfg.paths.out_dir;
  fs::create_directories(out);
  const fs::path manifest = data::make_manifest(cfg.data, out, first);
  config::write_resolved_config(cfg, out);
  std::cout << manifest.string() << '\n';
  return kExitOk;
}

int cmd_train(config::RunConfig cfg, const std::optional<std::string>& resume) {
  const fs::path out = cfg.paths.out_dir;
  fs::create_directories(out);
  config::write_resolved_config(cfg, out);

  std::vector<data::SourcePair> loaded;
  std::size_t dataset_size = cfg.data.count;
  if (!cfg.paths.manifest.empty()) {
    const fs::path mpath = cfg.paths.manifest;
    const data::Manifest m = data::load_manifest(mpath);
    for (const data::ManifestEntry& e : m.instances) {
      std::vector<fs::path> sp;
      for (const std::string& p : e.s_paths) sp.push_back(mpath.parent_path() / p);
      data::SourcePair pair;
      pair.s = read_stack(sp, nullptr);
      pair.y = pair.s.row_sum();
      pair.snr_db = e.snr_db;
      loaded.push_back(std::move(pair));
    }
    dataset_size = loaded.size();
  }
  std::vector<std::optional<data::SourcePair>> cache(dataset_size);
  const PairSource source = [&](std::size_t i) -> data::SourcePair {
    if (!loaded.empty()) return loaded[i];
    if (!cache[i]) cache[i] = data::generate_pair(cfg.data, i);
    return *cache[i];
  };

  std::optional<TrainState> state;
  if (resume) {
    state.emplace(load_checkpoint(*resume));
    spdlog::info("resumed from {} at step {}", *resume, state->step);
  } else {
    state.emplace(NeuralDenoiser(cfg.model, cfg.sde, derive_seed(cfg.seed, Stream::kInit, 0)),
                  cfg.seed);
  }
  std::ofstream log(out / "train_log.jsonl", resume ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot write " + (out / "train_log.jsonl").string());
  TrainObserver obs;
  obs.on_step = [&](const TrainState& s, const StepResult& r, double wall) {
    if (cfg.train.log_interval > 0 && s.step % cfg.train.log_interval == 0) {
      spdlog::info("step {} loss {:.6f} ({:.1f}s)", s.step, r.loss, wall);
    }
  };
  const double ema =
      train_loop(*state, cfg.train, source, dataset_size, &log, out / "checkpoints", obs);
  save_checkpoint(*state, out / "model.edsp");
  std::cout << "step " << state->step << " ema_loss " << ema << '\n';
  return kExitOk;
}

int cmd_separate(const Globals& g, const config::RunConfig& cfg,
                 const std::vector<std::string>& inputs) {
  const Backend backend = make_backend(g, cfg);
  const fs::path out = cfg.paths.out_dir;
  fs::create_directories(out);
  config::write_resolved_config(cfg, out);
  std::vector<dsp::WavData> mixes;
  for (const std::string& in : inputs) mixes.push_back(dsp::read_wav(in));
  const std::size_t k = cfg.data.num_sources;
  const std::vector<StackedSignal> est =
      separate_many(backend.get(), [&](std::size_t i) { return mixes[i].samples; }, mixes.size(),
                    k, cfg.sample, cfg.seed, cfg.jobs);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    write_estimates(est[i], out, fs::path(inputs[i]).stem().string(), mixes[i].sample_rate);
    spdlog::info("separated {}", inputs[i]);
  }
  return kExitOk;
}

int cmd_evaluate(const config::RunConfig& cfg, const std::string& estimates) {
  if (cfg.paths.manifest.empty()) throw UsageError("evaluate needs --manifest");
  const fs::path mpath = cfg.paths.manifest;
  const data::Manifest m = data::load_manifest(mpath);
  const fs::path est_dir = estimates.empty() ? fs::path(cfg.paths.out_dir) : fs::path(estimates);
  std::vector<InstanceReport> reports(m.instances.size());
  parallel_for(m.instances.size(), cfg.jobs, [&](std::size_t i) {
    const data::ManifestEntry& e = m.instances[i];
    std::vector<fs::path> refs;
    std::vector<fs::path> ests;
    const std::string stem = fs::path(e.mix_path).stem().string();
    for (std::size_t k = 0; k < e.s_paths.size(); ++k) {
      refs.push_back(mpath.parent_path() / e.s_paths[k]);
      ests.push_back(est_dir / (stem + "_s" + std::to_string(k) + ".wav"));
    }
    const StackedSignal ref = read_stack(refs, nullptr);
    const StackedSignal est = read_stack(ests, nullptr);
    const Signal y = dsp::read_wav(mpath.parent_path() / e.mix_path).samples;
    reports[i] = evaluate_instance(e.id, est, ref, y);
  });
  const EvalReport report = summarize(std::move(reports));
  const fs::path out = cfg.paths.out_dir;
  fs::create_directories(out);
  config::write_resolved_config(cfg, out);
  std::ofstream os(out / "report.json");
  os << report_to_json(report) << '\n';
  if (!os) throw IoError("cannot write " + (out / "report.json").string());
  std::cout << report_table(report);
  return kExitOk;
}

int cmd_dump_trajectory(const Globals& g, const config::RunConfig& cfg,
                        const std::optional<std::string>& input, const std::string& direction,
                        int em_steps) {
  const fs::path out = cfg.paths.out_dir;
  fs::create_directories(out);
  config::write_resolved_config(cfg, out);
  std::ofstream csv(out / "trajectory.csv");
  if (!csv) throw IoError("cannot write " + (out / "trajectory.csv").string());
  csv.precision(17);
  csv << "stage,step,t,source_index,sample_index,value\n";
  std::size_t step = 0;
  auto emit = [&](const char* stage, double t, const StackedSignal& x) {
    for (std::size_t k = 0; k < x.num_sources(); ++k) {
      for (std::size_t m = 0; m < x.num_samples(); ++m) {
        csv << stage << ',' << step << ',' << t << ',' << k << ',' << m << ',' << x(k, m) << '\n';
      }
    }
  };

  if (direction == "forward") {
    const data::SourcePair pair = data::generate_pair(cfg.data, 0);
    Rng rng = make_rng(cfg.seed, Stream::kForwardEm, 0);
    const ForwardPath path = forward_em_simulate(pair.s, pair.y, cfg.sde, em_steps, rng, true);
    for (; step < path.states.size(); ++step) emit("forward", path.times[step], path.states[step]);
    return kExitOk;
  }
  Signal y;
  if (input) {
    y = dsp::read_wav(*input).samples;
  } else {
    y = data::generate_pair(cfg.data, 0).y;
  }
  const Backend backend = make_backend(g, cfg);
  Rng rng = make_rng(cfg.seed, Stream::kSampler, 0);
  const StackedSignal result =
      separate(backend.get(), y, cfg.data.num_sources, cfg.sample, rng,
               [&](const char* stage, double t, const StackedSignal& x) {
                 emit(stage, t, x);
                 if (std::string(stage) == "post_drift") ++step;
               });
  emit("output", cfg.sde.t_eps(), result);
  return kExitOk;
}

int cmd_spectrogram(const config::RunConfig& cfg, const std::string& input,
                    const std::optional<std::string>& prefix) {
  const dsp::WavData w = dsp::read_wav(input);
  dsp::StftConfig sc = cfg.model.stft;
  sc.sample_rate = w.sample_rate;
  const dsp::ComplexSpectrogram spec = dsp::stft(w.samples, sc);
  const fs::path base =
      prefix ? fs::path(*prefix) : fs::path(cfg.paths.out_dir) / fs::path(input).stem();
  if (base.has_parent_path()) fs::create_directories(base.parent_path());
  dsp::write_spectrogram_pgm(base.string() + ".pgm", spec);
  dsp::write_spectrogram_csv(base.string() + ".csv", spec);
  std::cout << base.string() << ".pgm\n" << base.string() << ".csv\n";
  return kExitOk;
}

int cmd_oracle_demo(config::RunConfig cfg) {
  cfg.data.kind = data::Kind::kGaussian;
  const fs::path out = cfg.paths.out_dir;
  fs::create_directories(out);
  config::write_resolved_config(cfg, out);
  const fs::path manifest = data::make_manifest(cfg.data, out);
  const GaussianOracleDenoiser oracle({cfg.data.sigma_s}, cfg.sde);
  std::vector<data::SourcePair> pairs(cfg.data.count);
  parallel_for(pairs.size(), cfg.jobs,
               [&](std::size_t i) { pairs[i] = data::generate_pair(cfg.data, i); });
  const std::vector<StackedSignal> est =
      separate_many(oracle, [&](std::size_t i) { return pairs[i].y; }, pairs.size(),
                    cfg.data.num_sources, cfg.sample, cfg.seed, cfg.jobs);
  std::vector<InstanceReport> reports;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    write_estimates(est[i], out, "mix_" + std::to_string(i), cfg.data.sample_rate);
    reports.push_back(evaluate_instance(i, est[i], pairs[i].s, pairs[i].y));
  }
  const EvalReport report = summarize(std::move(reports));
  std::ofstream os(out / "report.json");
  os << report_to_json(report) << '\n';
  if (!os) throw IoError("cannot write " + (out / "report.json").string());
  std::cout << report_table(report);
  spdlog::info("manifest {}", manifest.string());
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  setup_logging();
  CLI::App app{"EDSep diffusion source separation engine", "edsep"};
  app.require_subcommand(1);
  Globals g;

  auto* validate = app.add_subcommand("validate-sde", "Monte-Carlo check of the forward marginals");
  std::size_t paths = 20000;
  int em_steps = 2000;
  std::size_t samples = 16;
  validate->add_option("--paths", paths, "Number of simulated paths");
  validate->add_option("--em-steps", em_steps, "Euler-Maruyama steps per path");
  validate->add_option("--samples", samples, "Samples per source (M)");

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset with manifest");
  std::size_t first = 0;
  gen->add_option("--first", first, "Index of the first instance");

  auto* train = app.add_subcommand("train", "Train the neural denoiser");
  std::optional<std::string> resume;
  std::optional<std::string> manifest;
  train->add_option("--resume", resume, "Continue from a checkpoint");
  train->add_option("--manifest", manifest, "Train on a generated dataset on disk");

  auto* sep = app.add_subcommand("separate", "Separate mixture WAV files");
  std::vector<std::string> inputs;
  sep->add_option("inputs", inputs, "Mixture WAV files")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Score estimates against a manifest");
  std::string estimates;
  evaluate->add_option("--manifest", manifest, "Dataset manifest");
  evaluate->add_option("--estimates", estimates, "Directory of <mix stem>_s<k>.wav files");

  auto* dump = app.add_subcommand("dump-trajectory", "Write sampler states as CSV");
  std::optional<std::string> input;
  std::string direction = "reverse";
  dump->add_option("--input", input, "Mixture WAV (default: data instance 0)");
  dump->add_option("--direction", direction, "reverse (sampler) or forward (SDE)")
      ->check(CLI::IsMember({"reverse", "forward"}));
  int dump_em_steps = 100;
  dump->add_option("--em-steps", dump_em_steps, "Forward simulation steps");

  auto* spec = app.add_subcommand("spectrogram", "WAV to PGM image and CSV");
  std::string spec_input;
  std::optional<std::string> prefix;
  spec->add_option("input", spec_input, "WAV file")->required();
  spec->add_option("--prefix", prefix, "Output path without extension");

  auto* demo = app.add_subcommand("oracle-demo", "Gaussian pipeline with the oracle denoiser");
  std::size_t demo_count = 10;
  demo->add_option("--count", demo_count, "Number of instances");

  for (CLI::App* sub : app.get_subcommands([](CLI::App*) { return true; })) add_globals(sub, g);

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitUsage;
  }

  try {
    config::RunConfig cfg = resolve(g);
    if (manifest) cfg.paths.manifest = *manifest;
    if (*validate) return cmd_validate_sde(cfg, paths, em_steps, samples);
    if (*gen) return cmd_gen_data(cfg, first);
    if (*train) return cmd_train(cfg, resume);
    if (*sep) return cmd_separate(g, cfg, inputs);
    if (*evaluate) return cmd_evaluate(cfg, estimates);
    if (*dump) return cmd_dump_trajectory(g, cfg, input, direction, dump_em_steps);
    if (*spec) return cmd_spectrogram(cfg, spec_input, prefix);
    if (*demo) {
      cfg.data.count = demo_count;
      return cmd_oracle_demo(cfg);
    }
  } catch (const config::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitUsage;
}

int run(int argc, char** argv) { return run(std::vector<std::string>(argv, argv + argc)); }

}  // namespace edsep::cli
