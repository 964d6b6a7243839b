#include "lssvc/audio.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>

#include "lssvc/error.hpp"
#include "lssvc/rng.hpp"

namespace lssvc {

void FeatureConfig::validate() const {
  if (sample_rate <= 0) throw InvalidArgument("sample_rate must be > 0");
  if (n_fft < 2 || (n_fft & (n_fft - 1)) != 0)
    throw InvalidArgument("n_fft must be a power of two >= 2");
  if (win_length == 0 || win_length > n_fft) throw InvalidArgument("win_length must be in [1, n_fft]");
  if (hop_length == 0 || hop_length > win_length)
    throw InvalidArgument("hop_length must be in [1, win_length]");
  if (n_mels == 0) throw InvalidArgument("n_mels must be >= 1");
  if (!(fmin >= 0.0) || !(fmax > fmin) || fmax > sample_rate / 2.0 + 1e-9)
    throw InvalidArgument("need 0 <= fmin < fmax <= sample_rate/2");
  if (!(log_floor > 0.0)) throw InvalidArgument("log_floor must be > 0");
}

double FeatureConfig::min_log_value() const { return std::log(log_floor); }

// ---------------------------------------------------------------- WAV

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}
void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
}

}  // namespace

Waveform load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open WAV file: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const std::string where = " (" + path.string() + ")";
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw IoError("malformed RIFF header" + where);
  }
  bool have_fmt = false;
  int sample_rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw IoError("truncated chunk in RIFF stream" + where);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw IoError("fmt chunk too short" + where);
      const unsigned char* f = bytes.data() + body;
      const std::uint16_t format = read_u16(f);
      const std::uint16_t channels = read_u16(f + 2);
      sample_rate = static_cast<int>(read_u32(f + 4));
      const std::uint16_t bits = read_u16(f + 14);
      if (format != 1) throw IoError("not PCM (format tag " + std::to_string(format) + ")" + where);
      if (channels != 1)
        throw IoError("not mono (" + std::to_string(channels) + " channels)" + where);
      if (bits != 16) throw IoError("not 16-bit (" + std::to_string(bits) + " bits)" + where);
      if (sample_rate <= 0) throw IoError("invalid sample rate" + where);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw IoError("data chunk before fmt chunk" + where);
      if (size % 2 != 0) throw IoError("odd data chunk size for 16-bit audio" + where);
      Waveform w;
      w.sample_rate = sample_rate;
      w.samples.resize(size / 2);
      const unsigned char* d = bytes.data() + body;
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(read_u16(d + 2 * i));
        w.samples[i] = static_cast<double>(v) / 32768.0;
      }
      return w;
    }
    pos = body + size + (size & 1u);
  }
  throw IoError((have_fmt ? "missing data chunk" : "missing fmt chunk") + where);
}

std::size_t save_wav(const Waveform& w, const std::filesystem::path& path) {
  if (w.sample_rate <= 0) throw InvalidArgument("save_wav: sample_rate must be > 0");
  std::vector<unsigned char> out;
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_bytes);
  std::size_t clipped = 0;
  for (double s : w.samples) {
    if (!std::isfinite(s)) throw InvalidArgument("save_wav: non-finite sample");
    double q = std::round(s * 32768.0);  // half away from zero
    if (q > 32767.0) {
      q = 32767.0;
      if (s > 1.0) ++clipped;
    } else if (q < -32768.0) {
      q = -32768.0;
      ++clipped;
    }
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write WAV file: " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed: " + path.string());
  return clipped;
}

std::size_t clip_samples(Waveform& w) {
  std::size_t n = 0;
  for (double& s : w.samples) {
    if (s > 1.0) {
      s = 1.0;
      ++n;
    } else if (s < -1.0) {
      s = -1.0;
      ++n;
    }
  }
  return n;
}

// ---------------------------------------------------------------- FFT

RealFft::RealFft(std::size_t n) : n_(n) {
  real_buf_ = fftw_alloc_real(n);
  auto* cbuf = fftw_alloc_complex(n / 2 + 1);
  complex_buf_ = cbuf;
  forward_plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), real_buf_, cbuf, FFTW_ESTIMATE);
  inverse_plan_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), cbuf, real_buf_, FFTW_ESTIMATE);
}

RealFft::~RealFft() {
  fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
  fftw_destroy_plan(static_cast<fftw_plan>(inverse_plan_));
  fftw_free(real_buf_);
  fftw_free(complex_buf_);
}

void RealFft::forward(const double* in, std::complex<double>* out) {
  std::copy(in, in + n_, real_buf_);
  fftw_execute(static_cast<fftw_plan>(forward_plan_));
  auto* c = static_cast<fftw_complex*>(complex_buf_);
  for (std::size_t k = 0; k <= n_ / 2; ++k) out[k] = {c[k][0], c[k][1]};
}

void RealFft::inverse(const std::complex<double>* in, double* out) {
  auto* c = static_cast<fftw_complex*>(complex_buf_);
  for (std::size_t k = 0; k <= n_ / 2; ++k) {
    c[k][0] = in[k].real();
    c[k][1] = in[k].imag();
  }
  fftw_execute(static_cast<fftw_plan>(inverse_plan_));
  const double scale = 1.0 / static_cast<double>(n_);
  for (std::size_t i = 0; i < n_; ++i) out[i] = real_buf_[i] * scale;
}

// ---------------------------------------------------------------- mel

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

std::vector<double> mel_edges(const FeatureConfig& cfg) {
  const double lo = hz_to_mel(cfg.fmin), hi = hz_to_mel(cfg.fmax);
  std::vector<double> edges(cfg.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1));
  }
  return edges;
}

}  // namespace

std::vector<double> mel_center_frequencies(const FeatureConfig& cfg) {
  const auto edges = mel_edges(cfg);
  return {edges.begin() + 1, edges.end() - 1};
}

Tensor mel_filterbank(const FeatureConfig& cfg) {
  cfg.validate();
  const auto edges = mel_edges(cfg);
  const std::size_t bins = cfg.n_bins();
  Tensor fb({cfg.n_mels, bins});
  const double bin_hz = static_cast<double>(cfg.sample_rate) / static_cast<double>(cfg.n_fft);
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[m], c = edges[m + 1], hi = edges[m + 2];
    double area = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      const double w = std::max(0.0, std::min((f - lo) / (c - lo), (hi - f) / (hi - c)));
      fb(m, k) = w;
      area += w;
    }
    if (area <= 0.0) {
      throw InvalidArgument("mel filter " + std::to_string(m) + " has zero support: n_mels=" +
                            std::to_string(cfg.n_mels) + " is too large for n_fft=" +
                            std::to_string(cfg.n_fft));
    }
    for (std::size_t k = 0; k < bins; ++k) fb(m, k) /= area;
  }
  return fb;
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

Tensor magnitude_stft(const Waveform& w, const FeatureConfig& cfg) {
  cfg.validate();
  if (w.samples.size() < cfg.win_length) {
    throw InvalidArgument("signal of " + std::to_string(w.samples.size()) +
                          " samples is shorter than win_length " + std::to_string(cfg.win_length));
  }
  const std::size_t frames = cfg.frame_count(w.samples.size());
  const std::size_t bins = cfg.n_bins();
  const auto window = hann_window(cfg.win_length);
  RealFft fft(cfg.n_fft);
  std::vector<double> buf(cfg.n_fft, 0.0);
  std::vector<std::complex<double>> spec(bins);
  Tensor mag({frames, bins});
  for (std::size_t t = 0; t < frames; ++t) {
    const double* src = w.samples.data() + t * cfg.hop_length;
    for (std::size_t i = 0; i < cfg.win_length; ++i) buf[i] = src[i] * window[i];
    fft.forward(buf.data(), spec.data());
    for (std::size_t k = 0; k < bins; ++k) mag(t, k) = std::abs(spec[k]);
  }
  return mag;
}

MelSpectrogram mel_spectrogram(const Waveform& w, const FeatureConfig& cfg) {
  const Tensor mag = magnitude_stft(w, cfg);
  const Tensor fb = mel_filterbank(cfg);
  const std::size_t frames = mag.rows(), bins = mag.cols();
  MelSpectrogram out{Tensor({frames, cfg.n_mels}), cfg};
  kernel::gemm_nt(frames, cfg.n_mels, bins, mag.data(), bins, fb.data(), bins, out.frames.data(),
                  cfg.n_mels, false);
  for (double& v : out.frames.storage()) v = std::log(std::max(v, cfg.log_floor));
  return out;
}

// ---------------------------------------------------------------- Griffin-Lim

namespace {

// Solves the SPD system G x = r in place via Cholesky (G is n x n).
void cholesky_solve(std::vector<double> g, std::size_t n, std::vector<double>& rhs_cols,
                    std::size_t ncols) {
  for (std::size_t j = 0; j < n; ++j) {
    double d = g[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= g[j * n + k] * g[j * n + k];
    if (d <= 0.0) throw Error("mel filterbank Gram matrix is not positive definite");
    d = std::sqrt(d);
    g[j * n + j] = d;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = g[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= g[i * n + k] * g[j * n + k];
      g[i * n + j] = s / d;
    }
  }
  for (std::size_t c = 0; c < ncols; ++c) {
    // rhs stored as n x ncols row-major
    for (std::size_t i = 0; i < n; ++i) {
      double s = rhs_cols[i * ncols + c];
      for (std::size_t k = 0; k < i; ++k) s -= g[i * n + k] * rhs_cols[k * ncols + c];
      rhs_cols[i * ncols + c] = s / g[i * n + i];
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double s = rhs_cols[ii * ncols + c];
      for (std::size_t k = ii + 1; k < n; ++k) s -= g[k * n + ii] * rhs_cols[k * ncols + c];
      rhs_cols[ii * ncols + c] = s / g[ii * n + ii];
    }
  }
}

void overlap_add(const std::vector<std::vector<std::complex<double>>>& spec,
                 const FeatureConfig& cfg, const std::vector<double>& window,
                 const std::vector<double>& inv_norm, RealFft& fft, std::vector<double>& out) {
  std::fill(out.begin(), out.end(), 0.0);
  std::vector<double> frame(cfg.n_fft);
  for (std::size_t t = 0; t < spec.size(); ++t) {
    fft.inverse(spec[t].data(), frame.data());
    double* dst = out.data() + t * cfg.hop_length;
    for (std::size_t i = 0; i < cfg.win_length; ++i) dst[i] += frame[i] * window[i];
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= inv_norm[i];
}

}  // namespace

Waveform griffin_lim(const MelSpectrogram& mel, int iters) {
  if (iters < 1) throw InvalidArgument("griffin_lim: iters must be >= 1");
  const FeatureConfig& cfg = mel.config;
  cfg.validate();
  const std::size_t frames = mel.num_frames(), n_mels = cfg.n_mels, bins = cfg.n_bins();
  if (mel.num_mels() != n_mels) throw InvalidArgument("griffin_lim: mel width does not match config");

  // Least-squares inversion: mag = F^T (F F^T + ridge)^-1 m, clamped at zero. Cells
  // at the log floor carry no energy.
  const Tensor fb = mel_filterbank(cfg);
  std::vector<double> gram(n_mels * n_mels, 0.0);
  kernel::gemm_nt(n_mels, n_mels, bins, fb.data(), bins, fb.data(), bins, gram.data(), n_mels, false);
  // Narrow low-frequency filters can share FFT bins; a small ridge keeps the
  // system well posed.
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n_mels; ++i) max_diag = std::max(max_diag, gram[i * n_mels + i]);
  for (std::size_t i = 0; i < n_mels; ++i) gram[i * n_mels + i] += 1e-3 * max_diag;
  std::vector<double> rhs(n_mels * frames);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t m = 0; m < n_mels; ++m)
      rhs[m * frames + t] = std::max(std::exp(mel.frames(t, m)) - cfg.log_floor, 0.0);
  cholesky_solve(gram, n_mels, rhs, frames);
  Tensor mag({frames, bins});
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t k = 0; k < bins; ++k) {
      double s = 0.0;
      for (std::size_t m = 0; m < n_mels; ++m) s += fb(m, k) * rhs[m * frames + t];
      mag(t, k) = std::max(s, 0.0);
    }

  const std::size_t length = (frames - 1) * cfg.hop_length + cfg.win_length;
  const auto window = hann_window(cfg.win_length);
  std::vector<double> inv_norm(length, 0.0);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t i = 0; i < cfg.win_length; ++i)
      inv_norm[t * cfg.hop_length + i] += window[i] * window[i];
  for (double& v : inv_norm) v = v > 1e-8 ? 1.0 / v : 0.0;

  Rng rng(0x6c5f);
  std::vector<std::vector<std::complex<double>>> spec(frames, std::vector<std::complex<double>>(bins));
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t k = 0; k < bins; ++k)
      spec[t][k] = std::polar(mag(t, k), 2.0 * std::numbers::pi * rng.uniform());

  RealFft fft(cfg.n_fft);
  std::vector<double> signal(length);
  std::vector<double> buf(cfg.n_fft, 0.0);
  for (int it = 0; it < iters; ++it) {
    overlap_add(spec, cfg, window, inv_norm, fft, signal);
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t i = 0; i < cfg.win_length; ++i)
        buf[i] = signal[t * cfg.hop_length + i] * window[i];
      fft.forward(buf.data(), spec[t].data());
      for (std::size_t k = 0; k < bins; ++k) {
        const double a = std::abs(spec[t][k]);
        spec[t][k] = a > 1e-12 ? spec[t][k] * (mag(t, k) / a) : std::complex<double>(mag(t, k), 0.0);
      }
    }
  }
  overlap_add(spec, cfg, window, inv_norm, fft, signal);

  Waveform out;
  out.sample_rate = cfg.sample_rate;
  out.samples = std::move(signal);
  double peak = 0.0;
  for (double s : out.samples) peak = std::max(peak, std::abs(s));
  if (peak > 0.0) {
    const double g = 0.95 / peak;
    for (double& s : out.samples) s *= g;
  }
  return out;
}

}  // namespace lssvc
