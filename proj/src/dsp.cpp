#include "edsep/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <string>

namespace edsep::dsp {

namespace {

// FFTW planning is not thread-safe; plans are created once per size under a
// lock and then executed concurrently with the new-array interface.
struct RealFftPlans {
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
};

std::mutex& planner_mutex() {
  static std::mutex mutex;
  return mutex;
}

const RealFftPlans& plans_for(int n) {
  static std::map<int, RealFftPlans> cache;
  std::lock_guard<std::mutex> lock(planner_mutex());
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<double> in(n);
  std::vector<fftw_complex> out(n / 2 + 1);
  RealFftPlans p;
  p.forward = fftw_plan_dft_r2c_1d(n, in.data(), out.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
  p.backward = fftw_plan_dft_c2r_1d(n, out.data(), in.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
  return cache.emplace(n, p).first->second;
}

void rfft(const RealFftPlans& plans, std::vector<double>& in, std::vector<Complex>& out) {
  fftw_execute_dft_r2c(plans.forward, in.data(), reinterpret_cast<fftw_complex*>(out.data()));
}

// c2r overwrites its input, so the caller passes a scratch copy.
void irfft(const RealFftPlans& plans, std::vector<Complex>& in, std::vector<double>& out) {
  fftw_execute_dft_c2r(plans.backward, reinterpret_cast<fftw_complex*>(in.data()), out.data());
}

// Summed squared window at every padded position.
std::vector<double> overlap_norm(const StftConfig& cfg, int frames) {
  const auto w = cfg.window();
  std::vector<double> norm(static_cast<std::size_t>((frames - 1) * cfg.hop + cfg.n_fft), 0.0);
  for (int f = 0; f < frames; ++f) {
    for (int n = 0; n < cfg.n_fft; ++n) norm[f * cfg.hop + n] += w[n] * w[n];
  }
  return norm;
}

}  // namespace

void StftConfig::validate() const {
  if (n_fft < 4) throw InvalidArgument("StftConfig: n_fft must be >= 4");
  if (hop < 1 || hop > n_fft / 2) throw InvalidArgument("StftConfig: need 1 <= hop <= n_fft/2");
  if (sample_rate < 1) throw InvalidArgument("StftConfig: sample_rate must be positive");
}

int StftConfig::frames(std::size_t length) const {
  const long cover = static_cast<long>(length) + 2 * pad() - n_fft;
  if (cover <= 0) return 1;
  return 1 + static_cast<int>((cover + hop - 1) / hop);
}

std::vector<double> StftConfig::window() const {
  std::vector<double> w(n_fft);
  for (int n = 0; n < n_fft; ++n) {
    const double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / n_fft);
    w[n] = std::sqrt(hann);
  }
  return w;
}

ComplexSpectrogram::ComplexSpectrogram(std::size_t channels, std::size_t frames,
                                       std::size_t bins)
    : channels_(channels), frames_(frames), bins_(bins), data_(channels * frames * bins) {}

ComplexSpectrogram stft(std::span<const double> signal, const StftConfig& cfg) {
  StackedSignal one(1, signal.size(), std::vector<double>(signal.begin(), signal.end()));
  return stft(one, cfg);
}

ComplexSpectrogram stft(const StackedSignal& x, const StftConfig& cfg) {
  cfg.validate();
  const std::size_t length = x.num_samples();
  if (length < static_cast<std::size_t>(cfg.n_fft)) {
    throw ShortSignalError("stft: signal of " + std::to_string(length) +
                           " samples is shorter than one frame (" + std::to_string(cfg.n_fft) +
                           ")");
  }
  const int frames = cfg.frames(length);
  const int bins = cfg.bins();
  const auto w = cfg.window();
  const auto& plans = plans_for(cfg.n_fft);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.n_fft));

  ComplexSpectrogram spec(x.num_sources(), frames, bins);
  std::vector<double> padded(static_cast<std::size_t>((frames - 1) * cfg.hop + cfg.n_fft));
  std::vector<double> buf(cfg.n_fft);
  std::vector<Complex> out(bins);
  for (std::size_t c = 0; c < x.num_sources(); ++c) {
    std::fill(padded.begin(), padded.end(), 0.0);
    const auto row = x.row(c);
    std::copy(row.begin(), row.end(), padded.begin() + cfg.pad());
    for (int f = 0; f < frames; ++f) {
      for (int n = 0; n < cfg.n_fft; ++n) buf[n] = padded[f * cfg.hop + n] * w[n];
      rfft(plans, buf, out);
      auto dst = spec.frame(c, f);
      for (int b = 0; b < bins; ++b) dst[b] = out[b] * scale;
    }
  }
  return spec;
}

Signal istft(const ComplexSpectrogram& spec, std::size_t channel, const StftConfig& cfg,
             std::size_t length) {
  cfg.validate();
  if (channel >= spec.channels()) throw InvalidArgument("istft: channel out of range");
  if (static_cast<int>(spec.bins()) != cfg.bins() ||
      static_cast<int>(spec.frames()) != cfg.frames(length)) {
    throw InvalidArgument("istft: spectrogram shape does not match framing for length " +
                          std::to_string(length));
  }
  const int frames = static_cast<int>(spec.frames());
  const auto w = cfg.window();
  const auto& plans = plans_for(cfg.n_fft);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.n_fft));
  const auto norm = overlap_norm(cfg, frames);

  std::vector<double> acc(norm.size(), 0.0);
  std::vector<Complex> in(cfg.bins());
  std::vector<double> buf(cfg.n_fft);
  for (int f = 0; f < frames; ++f) {
    const auto src = spec.frame(channel, f);
    std::copy(src.begin(), src.end(), in.begin());
    irfft(plans, in, buf);
    for (int n = 0; n < cfg.n_fft; ++n) acc[f * cfg.hop + n] += buf[n] * scale * w[n];
  }
  Signal out(length);
  for (std::size_t m = 0; m < length; ++m) {
    const std::size_t pos = m + cfg.pad();
    if (!(norm[pos] > 1e-10)) throw NumericalError("istft: window overlap vanishes");
    out[m] = acc[pos] / norm[pos];
  }
  return out;
}

StackedSignal istft(const ComplexSpectrogram& spec, const StftConfig& cfg, std::size_t length) {
  StackedSignal out(spec.channels(), length);
  for (std::size_t c = 0; c < spec.channels(); ++c) {
    const Signal row = istft(spec, c, cfg, length);
    std::copy(row.begin(), row.end(), out.row(c).begin());
  }
  return out;
}

ComplexSpectrogram istft_adjoint(const StackedSignal& grad, const StftConfig& cfg) {
  cfg.validate();
  const std::size_t length = grad.num_samples();
  const int frames = cfg.frames(length);
  const int bins = cfg.bins();
  const auto w = cfg.window();
  const auto& plans = plans_for(cfg.n_fft);
  const auto norm = overlap_norm(cfg, frames);
  // The c2r map reads only Re of the DC (and, for even n_fft, Nyquist) bin
  // and counts every other bin twice through Hermitian symmetry.
  const double base = 1.0 / std::sqrt(static_cast<double>(cfg.n_fft));

  ComplexSpectrogram out(grad.num_sources(), frames, bins);
  std::vector<double> padded(norm.size());
  std::vector<double> buf(cfg.n_fft);
  std::vector<Complex> spec(bins);
  for (std::size_t c = 0; c < grad.num_sources(); ++c) {
    std::fill(padded.begin(), padded.end(), 0.0);
    const auto g = grad.row(c);
    for (std::size_t m = 0; m < length; ++m) {
      const std::size_t pos = m + cfg.pad();
      padded[pos] = g[m] / norm[pos];
    }
    for (int f = 0; f < frames; ++f) {
      for (int n = 0; n < cfg.n_fft; ++n) buf[n] = padded[f * cfg.hop + n] * w[n];
      rfft(plans, buf, spec);
      auto dst = out.frame(c, f);
      for (int b = 0; b < bins; ++b) {
        const bool single = (b == 0) || (cfg.n_fft % 2 == 0 && b == cfg.n_fft / 2);
        const Complex v = spec[b] * base;
        // x[n] = Σ w_b (Re C cos θ - Im C sin θ) and G = Σ g e^{-iθ}, so
        // d/dRe = w_b Re G and d/dIm = w_b Im G.
        dst[b] = single ? Complex(v.real(), 0.0) : 2.0 * v;
      }
    }
  }
  return out;
}

Signal bandpass(std::span<const double> x, double lo_hz, double hi_hz, int sample_rate) {
  if (x.empty()) return {};
  const int n = static_cast<int>(x.size());
  const auto& plans = plans_for(n);
  std::vector<double> buf(x.begin(), x.end());
  std::vector<Complex> spec(n / 2 + 1);
  rfft(plans, buf, spec);
  for (int b = 0; b < static_cast<int>(spec.size()); ++b) {
    const double f = static_cast<double>(b) * sample_rate / n;
    if (f < lo_hz || f > hi_hz) spec[b] = 0.0;
  }
  irfft(plans, spec, buf);
  for (double& v : buf) v /= n;
  return buf;
}

Complex compress(Complex x, double alpha, double beta) {
  const double mag = std::abs(x);
  if (mag == 0.0) return {0.0, 0.0};
  return x * (std::pow(mag, alpha) / (beta * mag));
}

Complex decompress(Complex x, double alpha, double beta) {
  const double mag = std::abs(x);
  if (mag == 0.0) return {0.0, 0.0};
  return x * (std::pow(beta * mag, 1.0 / alpha) / mag);
}

ComplexSpectrogram compress(const ComplexSpectrogram& spec, double alpha, double beta) {
  if (!(alpha > 0.0 && beta > 0.0)) throw InvalidArgument("compress: alpha, beta must be > 0");
  ComplexSpectrogram out = spec;
  for (Complex& v : out.flat()) v = compress(v, alpha, beta);
  return out;
}

ComplexSpectrogram decompress(const ComplexSpectrogram& spec, double alpha, double beta) {
  if (!(alpha > 0.0 && beta > 0.0)) throw InvalidArgument("decompress: alpha, beta must be > 0");
  ComplexSpectrogram out = spec;
  for (Complex& v : out.flat()) v = decompress(v, alpha, beta);
  return out;
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff),
                              static_cast<char>((v >> 24) & 0xff)};
  os.write(b.data(), 4);
}

void put_u16(std::ostream& os, std::uint16_t v) {
  const std::array<char, 2> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  os.write(b.data(), 2);
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

std::int16_t to_pcm16(double v) {
  const double scaled = std::nearbyint(v * 32768.0);
  if (!(scaled < 32767.0)) return 32767;  // also maps NaN to the rail
  if (scaled < -32768.0) return -32768;
  return static_cast<std::int16_t>(scaled);
}

WavData read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_wav: cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw WavHeaderError("read_wav: " + path.string() + " is not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  int channels = 0;
  int rate = 0;
  int bits = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = get_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) {
      throw WavHeaderError("read_wav: truncated chunk in " + path.string());
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw WavHeaderError("read_wav: short fmt chunk");
      const std::uint16_t format = get_u16(bytes.data() + body);
      channels = get_u16(bytes.data() + body + 2);
      rate = static_cast<int>(get_u32(bytes.data() + body + 4));
      bits = get_u16(bytes.data() + body + 14);
      if (format != 1 || bits != 16) {
        throw WavEncodingError("read_wav: only 16-bit PCM is supported (format " +
                               std::to_string(format) + ", " + std::to_string(bits) + " bits)");
      }
      if (channels != 1) {
        throw WavChannelError("read_wav: expected mono, got " + std::to_string(channels) +
                              " channels");
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw WavHeaderError("read_wav: data chunk before fmt chunk");
      if (size % 2 != 0) throw WavHeaderError("read_wav: odd data chunk size");
      WavData out;
      out.sample_rate = rate;
      out.samples.resize(size / 2);
      for (std::size_t i = 0; i < out.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(get_u16(bytes.data() + body + 2 * i));
        out.samples[i] = v / 32768.0;
      }
      return out;
    }
    pos = body + size + (size & 1);
  }
  throw WavHeaderError("read_wav: no data chunk in " + path.string());
}

void write_wav(const std::filesystem::path& path, std::span<const double> signal,
               int sample_rate) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("write_wav: cannot open " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(signal.size() * 2);
  os.write("RIFF", 4);
  put_u32(os, 36 + data_bytes);
  os.write("WAVEfmt ", 8);
  put_u32(os, 16);
  put_u16(os, 1);
  put_u16(os, 1);
  put_u32(os, static_cast<std::uint32_t>(sample_rate));
  put_u32(os, static_cast<std::uint32_t>(sample_rate) * 2);
  put_u16(os, 2);
  put_u16(os, 16);
  os.write("data", 4);
  put_u32(os, data_bytes);
  for (double v : signal) put_u16(os, static_cast<std::uint16_t>(to_pcm16(v)));
  if (!os) throw IoError("write_wav: write failed for " + path.string());
}

void write_spectrogram_pgm(const std::filesystem::path& path, const ComplexSpectrogram& spec,
                           std::size_t channel) {
  if (channel >= spec.channels()) throw InvalidArgument("write_spectrogram_pgm: bad channel");
  const std::size_t w = spec.frames();
  const std::size_t h = spec.bins();
  std::vector<double> logmag(w * h);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t f = 0; f < w; ++f) {
    for (std::size_t b = 0; b < h; ++b) {
      const double v = std::log10(std::abs(spec(channel, f, b)) + 1e-12);
      logmag[b * w + f] = v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  const double range = hi > lo ? hi - lo : 1.0;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("write_spectrogram_pgm: cannot open " + path.string());
  os << "P5\n" << w << ' ' << h << "\n255\n";
  for (std::size_t row = 0; row < h; ++row) {
    const std::size_t b = h - 1 - row;
    for (std::size_t f = 0; f < w; ++f) {
      const double v = (logmag[b * w + f] - lo) / range;
      os.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  }
  if (!os) throw IoError("write_spectrogram_pgm: write failed for " + path.string());
}

void write_spectrogram_csv(const std::filesystem::path& path, const ComplexSpectrogram& spec,
                           std::size_t channel) {
  if (channel >= spec.channels()) throw InvalidArgument("write_spectrogram_csv: bad channel");
  std::ofstream os(path);
  if (!os) throw IoError("write_spectrogram_csv: cannot open " + path.string());
  os.precision(17);
  os << "frame,bin,re,im\n";
  for (std::size_t f = 0; f < spec.frames(); ++f) {
    for (std::size_t b = 0; b < spec.bins(); ++b) {
      const Complex v = spec(channel, f, b);
      os << f << ',' << b << ',' << v.real() << ',' << v.imag() << '\n';
    }
  }
  if (!os) throw IoError("write_spectrogram_csv: write failed for " + path.string());
}

}  // namespace edsep::dsp
