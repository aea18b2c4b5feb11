#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "edsep/mixalg.hpp"

namespace edsep::data {

enum class Kind { kGaussian, kTonalVsNoise };

std::string to_string(Kind kind);
Kind kind_from_string(const std::string& name);

struct DatasetSpec {
  Kind kind = Kind::kTonalVsNoise;
  std::size_t num_sources = 2;
  std::size_t num_samples = 16000;  // 2 s at 8 kHz
  std::size_t count = 1000;
  std::uint64_t seed = 0;
  double snr_lo_db = -5.0;
  double snr_hi_db = 5.0;
  double sigma_s = 0.1;  // Gaussian kind only
  int sample_rate = 8000;

  void validate() const;
};

// Sources plus their mixture y = Σ_k s_k.
struct SourcePair {
  StackedSignal s;
  Signal y;
  double snr_db = 0.0;  // 10 log10(E_0 / E_1) as generated
};

// i.i.d. N(0, σ_s²) entries, deterministic per (seed, index).
SourcePair gen_gaussian_pair(const DatasetSpec& spec, std::size_t index);

// Source 0: three enveloped sinusoids in [100, 800] Hz. Source 1: noise
// band-limited to [1200, 3600] Hz, rescaled to an SNR drawn uniformly from
// the spec's range. Requires K = 2.
SourcePair gen_tonal_vs_noise_pair(const DatasetSpec& spec, std::size_t index);

// Dispatches on spec.kind.
SourcePair generate_pair(const DatasetSpec& spec, std::size_t index);

// Seed recorded for instance `index`.
std::uint64_t instance_seed(const DatasetSpec& spec, std::size_t index);

struct ManifestEntry {
  std::size_t id = 0;
  std::vector<std::string> s_paths;  // relative to the manifest directory
  std::string mix_path;
  double snr_db = 0.0;
  std::uint64_t seed = 0;
};

struct Manifest {
  DatasetSpec spec;
  std::vector<ManifestEntry> instances;
};

// Writes s{k}_{id}.wav for every source, mix_{id}.wav and manifest.json for
// instances [first, first + spec.count). Returns the manifest path.
std::filesystem::path make_manifest(const DatasetSpec& spec, const std::filesystem::path& dir,
                                    std::size_t first = 0);

std::string manifest_to_json(const Manifest& manifest);
Manifest manifest_from_json(const std::string& text);
Manifest load_manifest(const std::filesystem::path& path);

}  // namespace edsep::data
