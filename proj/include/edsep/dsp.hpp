#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "edsep/error.hpp"
#include "edsep/mixalg.hpp"

namespace edsep::dsp {

using Complex = std::complex<double>;

// Framing for the analysis/synthesis pair. Both windows are sqrt periodic
// Hann; synthesis divides by the summed squared window so reconstruction is
// exact for any hop < n_fft.
struct StftConfig {
  int n_fft = 510;
  int hop = 128;
  int sample_rate = 8000;

  int bins() const { return n_fft / 2 + 1; }
  int pad() const { return n_fft / 2; }
  void validate() const;
  // Number of frames produced for a signal of `length` samples.
  int frames(std::size_t length) const;
  std::vector<double> window() const;
};

// channels x frames x bins, row-major.
class ComplexSpectrogram {
 public:
  ComplexSpectrogram() = default;
  ComplexSpectrogram(std::size_t channels, std::size_t frames, std::size_t bins);

  std::size_t channels() const { return channels_; }
  std::size_t frames() const { return frames_; }
  std::size_t bins() const { return bins_; }

  Complex& operator()(std::size_t c, std::size_t f, std::size_t b) {
    return data_[(c * frames_ + f) * bins_ + b];
  }
  Complex operator()(std::size_t c, std::size_t f, std::size_t b) const {
    return data_[(c * frames_ + f) * bins_ + b];
  }
  std::span<Complex> frame(std::size_t c, std::size_t f) {
    return {data_.data() + (c * frames_ + f) * bins_, bins_};
  }
  std::span<const Complex> frame(std::size_t c, std::size_t f) const {
    return {data_.data() + (c * frames_ + f) * bins_, bins_};
  }
  std::span<Complex> flat() { return data_; }
  std::span<const Complex> flat() const { return data_; }

 private:
  std::size_t channels_ = 0;
  std::size_t frames_ = 0;
  std::size_t bins_ = 0;
  std::vector<Complex> data_;
};

class ShortSignalError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

// Center-padded STFT, scaled by 1/sqrt(n_fft). Rejects signals shorter than
// one frame.
ComplexSpectrogram stft(std::span<const double> signal, const StftConfig& cfg);
ComplexSpectrogram stft(const StackedSignal& x, const StftConfig& cfg);
// Inverse of stft for a signal of the given length.
Signal istft(const ComplexSpectrogram& spec, std::size_t channel, const StftConfig& cfg,
             std::size_t length);
StackedSignal istft(const ComplexSpectrogram& spec, const StftConfig& cfg,
                    std::size_t length);
// Adjoint of the (real-linear) istft map: given dL/d(signal) for every
// channel, returns dL/dRe and dL/dIm packed as one complex value per
// coefficient.
ComplexSpectrogram istft_adjoint(const StackedSignal& grad, const StftConfig& cfg);

// m(x) = β^-1 |x|^α e^{j∠x} and its inverse (β |x|)^{1/α} e^{j∠x}.
Complex compress(Complex x, double alpha = 0.5, double beta = 0.15);
Complex decompress(Complex x, double alpha = 0.5, double beta = 0.15);
ComplexSpectrogram compress(const ComplexSpectrogram& spec, double alpha = 0.5,
                            double beta = 0.15);
ComplexSpectrogram decompress(const ComplexSpectrogram& spec, double alpha = 0.5,
                              double beta = 0.15);

// Zero-phase band-pass that keeps bins with lo_hz <= f <= hi_hz of the
// full-length real spectrum.
Signal bandpass(std::span<const double> x, double lo_hz, double hi_hz, int sample_rate);

// 16-bit PCM mono RIFF/WAVE.
class WavError : public IoError {
 public:
  using IoError::IoError;
};
class WavEncodingError : public WavError {
 public:
  using WavError::WavError;
};
class WavChannelError : public WavError {
 public:
  using WavError::WavError;
};
class WavHeaderError : public WavError {
 public:
  using WavError::WavError;
};

struct WavData {
  Signal samples;
  int sample_rate = 0;
};

WavData read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, std::span<const double> signal,
               int sample_rate);
// Saturating conversion used by write_wav.
std::int16_t to_pcm16(double v);

// Log-magnitude image (binary PGM, frames along x, bins along y with low
// frequencies at the bottom) and a CSV of the raw coefficients.
void write_spectrogram_pgm(const std::filesystem::path& path, const ComplexSpectrogram& spec,
                           std::size_t channel = 0);
void write_spectrogram_csv(const std::filesystem::path& path, const ComplexSpectrogram& spec,
                           std::size_t channel = 0);

}  // namespace edsep::dsp
