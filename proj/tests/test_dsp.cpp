#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "edsep/dsp.hpp"
#include "helpers.hpp"

using namespace edsep;
using namespace edsep::dsp;
using edsep::testing::random_stack;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("edsep_dsp_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Dsp, CompressExample) {
  const double theta = 0.7;
  const Complex x = std::polar(4.0, theta);
  const Complex c = compress(x);
  EXPECT_NEAR(std::abs(c), 2.0 / 0.15, 1e-12);
  EXPECT_NEAR(std::arg(c), theta, 1e-14);
  EXPECT_EQ(compress(Complex(0.0, 0.0)), Complex(0.0, 0.0));
}

TEST(Dsp, CompressRoundTrip) {
  Rng rng = make_rng(1, Stream::kProbe, 0);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const Complex x(n(rng), n(rng));
    const Complex back = decompress(compress(x));
    EXPECT_LE(std::abs(back - x), 1e-9 * std::abs(x));
  }
}

TEST(Dsp, FrameCountAndShortSignals) {
  const StftConfig cfg;
  EXPECT_EQ(cfg.bins(), 256);
  EXPECT_EQ(cfg.frames(16000), 1 + 16000 / 128);
  EXPECT_THROW(stft(Signal(100, 0.0), cfg), ShortSignalError);
}

TEST(Dsp, StftRoundTrip) {
  const StftConfig cfg;
  for (std::size_t m : {510u, 1000u, 16000u}) {
    const StackedSignal x = random_stack(2, m, m);
    const StackedSignal back = istft(stft(x, cfg), cfg, m);
    EXPECT_LT(edsep::testing::max_abs_diff(back, x), 1e-7) << m;
  }
}

TEST(Dsp, StftIsUnitaryScaledForPureTone) {
  const StftConfig cfg;
  Signal x(4096);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::cos(2 * std::numbers::pi * 1000.0 * i / 8000.0);
  const ComplexSpectrogram s = stft(x, cfg);
  // 1 kHz sits at bin 1000 / (8000 / 510) = 63.75; the peak must be there.
  const auto frame = s.frame(0, 10);
  std::size_t peak = 0;
  for (std::size_t b = 0; b < frame.size(); ++b) {
    if (std::abs(frame[b]) > std::abs(frame[peak])) peak = b;
  }
  EXPECT_TRUE(peak == 63 || peak == 64) << peak;
}

TEST(Dsp, IstftAdjointMatchesInnerProducts) {
  const StftConfig cfg;
  const std::size_t m = 2000;
  const StackedSignal x = random_stack(2, m, 11);
  ComplexSpectrogram c = stft(x, cfg);
  Rng rng = make_rng(2, Stream::kProbe, 0);
  std::normal_distribution<double> n;
  for (Complex& v : c.flat()) v = Complex(n(rng), n(rng));
  const StackedSignal g = random_stack(2, m, 12);
  const StackedSignal y = istft(c, cfg, m);
  const ComplexSpectrogram adj = istft_adjoint(g, cfg);
  double lhs = dot(y, g);
  double rhs = 0.0;
  for (std::size_t i = 0; i < c.flat().size(); ++i) {
    rhs += c.flat()[i].real() * adj.flat()[i].real() + c.flat()[i].imag() * adj.flat()[i].imag();
  }
  EXPECT_NEAR(lhs, rhs, 1e-9 * std::abs(lhs));
}

TEST(Dsp, WavRoundTrip) {
  const auto dir = temp_dir("wav");
  const StackedSignal x = random_stack(1, 4000, 3, 0.1);
  write_wav(dir / "a.wav", x.row(0), 8000);
  const WavData w = read_wav(dir / "a.wav");
  EXPECT_EQ(w.sample_rate, 8000);
  ASSERT_EQ(w.samples.size(), 4000u);
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    EXPECT_LE(std::abs(w.samples[i] - x.row(0)[i]), 1.0 / 32768.0);
  }
}

TEST(Dsp, Pcm16Saturates) {
  EXPECT_EQ(to_pcm16(1.5), 32767);
  EXPECT_EQ(to_pcm16(1.0), 32767);
  EXPECT_EQ(to_pcm16(-1.0), -32768);
  EXPECT_EQ(to_pcm16(-3.0), -32768);
  EXPECT_EQ(to_pcm16(0.0), 0);
}

TEST(Dsp, WavErrorsAreTyped) {
  const auto dir = temp_dir("wav_err");
  {
    std::ofstream f(dir / "junk.wav", std::ios::binary);
    f << "not a riff file at all, just text padding..........";
  }
  EXPECT_THROW(read_wav(dir / "junk.wav"), WavHeaderError);
  EXPECT_THROW(read_wav(dir / "missing.wav"), IoError);
}

TEST(Dsp, BandpassKeepsOnlyThePassband) {
  Signal x(8000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = i / 8000.0;
    x[i] = std::sin(2 * std::numbers::pi * 300 * t) + std::sin(2 * std::numbers::pi * 2000 * t);
  }
  const Signal y = bandpass(x, 1200, 3600, 8000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_NEAR(y[i], std::sin(2 * std::numbers::pi * 2000 * (i / 8000.0)), 1e-9);
  }
}

TEST(Dsp, SpectrogramFiles) {
  const auto dir = temp_dir("spec");
  const StackedSignal x = random_stack(1, 2000, 4);
  const ComplexSpectrogram s = stft(x.row(0), StftConfig());
  write_spectrogram_pgm(dir / "s.pgm", s);
  write_spectrogram_csv(dir / "s.csv", s);
  std::ifstream pgm(dir / "s.pgm", std::ios::binary);
  std::string magic;
  pgm >> magic;
  EXPECT_EQ(magic, "P5");
  std::ifstream csv(dir / "s.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "frame,bin,re,im");
}
