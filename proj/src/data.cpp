#include "edsep/data.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "edsep/config.hpp"
#include "edsep/dsp.hpp"
#include "edsep/error.hpp"
#include "edsep/rng.hpp"

namespace edsep::data {

namespace {

double energy(std::span<const double> x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

double draw_snr(const DatasetSpec& spec, Rng& rng) {
  if (spec.snr_lo_db == spec.snr_hi_db) return spec.snr_lo_db;
  return std::uniform_real_distribution<double>(spec.snr_lo_db, spec.snr_hi_db)(rng);
}

constexpr double kTonalRms = 0.1;

}  // namespace

std::string to_string(Kind kind) {
  return kind == Kind::kGaussian ? "gaussian" : "tonal_vs_noise";
}

Kind kind_from_string(const std::string& name) {
  if (name == "gaussian") return Kind::kGaussian;
  if (name == "tonal_vs_noise") return Kind::kTonalVsNoise;
  throw InvalidArgument("unknown dataset kind '" + name + "'");
}

void DatasetSpec::validate() const {
  if (num_sources < 2) throw InvalidArgument("DatasetSpec: need K >= 2");
  if (num_samples < 1) throw InvalidArgument("DatasetSpec: need M >= 1");
  if (count < 1) throw InvalidArgument("DatasetSpec: count must be >= 1");
  if (!(snr_lo_db <= snr_hi_db)) throw InvalidArgument("DatasetSpec: snr range lo > hi");
  if (!(sigma_s > 0.0)) throw InvalidArgument("DatasetSpec: sigma_s must be > 0");
  if (kind == Kind::kTonalVsNoise && num_sources != 2) {
    throw InvalidArgument("DatasetSpec: tonal_vs_noise requires K = 2");
  }
  if (sample_rate < 1) throw InvalidArgument("DatasetSpec: sample_rate must be positive");
}

std::uint64_t instance_seed(const DatasetSpec& spec, std::size_t index) {
  return derive_seed(spec.seed, Stream::kData, index);
}

SourcePair gen_gaussian_pair(const DatasetSpec& spec, std::size_t index) {
  if (spec.kind != Kind::kGaussian) throw InvalidArgument("gen_gaussian_pair: wrong kind");
  spec.validate();
  Rng rng(instance_seed(spec, index));
  SourcePair out;
  out.s = normal_stacked(spec.num_sources, spec.num_samples, rng);
  out.s *= spec.sigma_s;
  out.y = out.s.row_sum();
  out.snr_db = 10.0 * std::log10(energy(out.s.row(0)) / energy(out.s.row(1)));
  return out;
}

SourcePair gen_tonal_vs_noise_pair(const DatasetSpec& spec, std::size_t index) {
  if (spec.kind != Kind::kTonalVsNoise) {
    throw InvalidArgument("gen_tonal_vs_noise_pair: wrong kind");
  }
  spec.validate();
  Rng rng(instance_seed(spec, index));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;
  const double sr = spec.sample_rate;
  const std::size_t m = spec.num_samples;

  Signal tonal(m, 0.0);
  for (int j = 0; j < 3; ++j) {
    const double freq = 100.0 + 700.0 * unit(rng);
    const double phase = two_pi * unit(rng);
    const double amp = 0.5 + 0.5 * unit(rng);
    for (std::size_t n = 0; n < m; ++n) tonal[n] += amp * std::sin(two_pi * freq * n / sr + phase);
  }
  const double env_freq = 0.5 + 1.5 * unit(rng);
  const double env_phase = two_pi * unit(rng);
  for (std::size_t n = 0; n < m; ++n) {
    tonal[n] *= 0.6 + 0.4 * std::sin(two_pi * env_freq * n / sr + env_phase);
  }
  const double tonal_scale = kTonalRms / std::sqrt(energy(tonal) / m);
  for (double& v : tonal) v *= tonal_scale;

  Signal white(m);
  fill_normal(white, rng);
  Signal noise = dsp::bandpass(white, 1200.0, 3600.0, spec.sample_rate);
  const double snr = draw_snr(spec, rng);
  const double target_noise_energy = energy(tonal) / std::pow(10.0, snr / 10.0);
  const double noise_scale = std::sqrt(target_noise_energy / energy(noise));
  for (double& v : noise) v *= noise_scale;

  SourcePair out;
  out.s = StackedSignal::from_rows({tonal, noise});
  out.y = out.s.row_sum();
  out.snr_db = snr;
  return out;
}

SourcePair generate_pair(const DatasetSpec& spec, std::size_t index) {
  return spec.kind == Kind::kGaussian ? gen_gaussian_pair(spec, index)
                                      : gen_tonal_vs_noise_pair(spec, index);
}

std::filesystem::path make_manifest(const DatasetSpec& spec, const std::filesystem::path& dir,
                                    std::size_t first) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("make_manifest: cannot create " + dir.string() + ": " + ec.message());

  Manifest manifest;
  manifest.spec = spec;
  for (std::size_t i = 0; i < spec.count; ++i) {
    const std::size_t id = first + i;
    const SourcePair pair = generate_pair(spec, id);
    ManifestEntry entry;
    entry.id = id;
    entry.seed = instance_seed(spec, id);
    entry.snr_db = pair.snr_db;
    for (std::size_t k = 0; k < spec.num_sources; ++k) {
      const std::string name = "s" + std::to_string(k) + "_" + std::to_string(id) + ".wav";
      dsp::write_wav(dir / name, pair.s.row(k), spec.sample_rate);
      entry.s_paths.push_back(name);
    }
    entry.mix_path = "mix_" + std::to_string(id) + ".wav";
    dsp::write_wav(dir / entry.mix_path, pair.y, spec.sample_rate);
    manifest.instances.push_back(std::move(entry));
  }
  const auto path = dir / "manifest.json";
  std::ofstream os(path);
  if (!os) throw IoError("make_manifest: cannot write " + path.string());
  os << manifest_to_json(manifest) << '\n';
  if (!os) throw IoError("make_manifest: write failed for " + path.string());
  return path;
}

std::string manifest_to_json(const Manifest& manifest) {
  nlohmann::json j;
  j["spec"] = config::to_json(manifest.spec);
  j["instances"] = nlohmann::json::array();
  for (const ManifestEntry& e : manifest.instances) {
    j["instances"].push_back({{"id", e.id},
                              {"s_paths", e.s_paths},
                              {"mix_path", e.mix_path},
                              {"snr_db", e.snr_db},
                              {"seed", e.seed}});
  }
  return j.dump(2);
}

Manifest manifest_from_json(const std::string& text) {
  const nlohmann::json j = config::parse_strict_json(text);
  Manifest m;
  try {
    m.spec = config::dataset_from_json(j.at("spec"));
    for (const auto& e : j.at("instances")) {
      ManifestEntry entry;
      entry.id = e.at("id").get<std::size_t>();
      entry.s_paths = e.at("s_paths").get<std::vector<std::string>>();
      entry.mix_path = e.at("mix_path").get<std::string>();
      entry.snr_db = e.at("snr_db").get<double>();
      entry.seed = e.at("seed").get<std::uint64_t>();
      m.instances.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw config::ConfigError(std::string("manifest: ") + ex.what());
  }
  return m;
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_manifest: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return manifest_from_json(ss.str());
}

}  // namespace edsep::data
