#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "edsep/data.hpp"
#include "edsep/dsp.hpp"
#include "edsep/error.hpp"

using namespace edsep;
using namespace edsep::data;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("edsep_data_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

double energy(std::span<const double> x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

}  // namespace

TEST(Data, GaussianPairsAreDeterministic) {
  DatasetSpec spec;
  spec.kind = Kind::kGaussian;
  spec.num_samples = 1000;
  const SourcePair a = generate_pair(spec, 3);
  const SourcePair b = generate_pair(spec, 3);
  EXPECT_EQ(a.s, b.s);
  EXPECT_EQ(a.y, b.y);
  EXPECT_NE(generate_pair(spec, 4).s, a.s);
  const Signal sum = a.s.row_sum();
  EXPECT_EQ(sum, a.y);
  EXPECT_NEAR(energy(a.s.flat()) / 2000.0, 0.01, 0.002);
}

TEST(Data, TonalVsNoiseHitsTheDrawnSnr) {
  DatasetSpec spec;
  for (std::size_t i = 0; i < 5; ++i) {
    const SourcePair p = generate_pair(spec, i);
    EXPECT_GE(p.snr_db, -5.0);
    EXPECT_LE(p.snr_db, 5.0);
    const double measured = 10.0 * std::log10(energy(p.s.row(0)) / energy(p.s.row(1)));
    EXPECT_NEAR(measured, p.snr_db, 1e-9);
    EXPECT_NEAR(std::sqrt(energy(p.s.row(0)) / 16000.0), 0.1, 1e-12);
  }
}

TEST(Data, SpecValidation) {
  DatasetSpec spec;
  spec.num_sources = 3;
  EXPECT_THROW(spec.validate(), InvalidArgument);
  spec.kind = Kind::kGaussian;
  EXPECT_NO_THROW(spec.validate());
  spec.snr_lo_db = 10.0;
  EXPECT_THROW(spec.validate(), InvalidArgument);
  EXPECT_THROW(kind_from_string("speech"), InvalidArgument);
}

TEST(Data, ManifestWritesTriplets) {
  DatasetSpec spec;
  spec.count = 10;
  spec.num_samples = 4000;
  const auto dir = temp_dir("manifest");
  const auto path = make_manifest(spec, dir);
  std::size_t wavs = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) wavs += e.path().extension() == ".wav";
  EXPECT_EQ(wavs, 30u);
  EXPECT_TRUE(std::filesystem::exists(path));

  const Manifest m = load_manifest(path);
  ASSERT_EQ(m.instances.size(), 10u);
  for (const ManifestEntry& e : m.instances) {
    const Signal s0 = dsp::read_wav(dir / e.s_paths[0]).samples;
    const Signal s1 = dsp::read_wav(dir / e.s_paths[1]).samples;
    const Signal y = dsp::read_wav(dir / e.mix_path).samples;
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_LE(std::abs(s0[i] + s1[i] - y[i]), 2.0 / 32768);
    EXPECT_EQ(e.seed, instance_seed(spec, e.id));
  }
  EXPECT_EQ(manifest_to_json(manifest_from_json(manifest_to_json(m))), manifest_to_json(m));
}
