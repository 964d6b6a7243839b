#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <vector>

#include "lssvc/numerics.hpp"

namespace lssvc {

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  double duration() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
};

struct FeatureConfig {
  int sample_rate = 16000;
  std::size_t n_fft = 512;
  std::size_t win_length = 400;
  std::size_t hop_length = 160;
  std::size_t n_mels = 80;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = 1e-5;

  void validate() const;
  std::size_t n_bins() const { return n_fft / 2 + 1; }
  // Frames produced for a signal of `n` samples (n >= win_length).
  std::size_t frame_count(std::size_t n) const { return 1 + (n - win_length) / hop_length; }
  double min_log_value() const;
};

// T x M log-mel frames.
struct MelSpectrogram {
  Tensor frames;
  FeatureConfig config;

  std::size_t num_frames() const { return frames.rows(); }
  std::size_t num_mels() const { return frames.cols(); }
};

// Mono 16-bit PCM WAV I/O.
Waveform load_wav(const std::filesystem::path& path);
// Returns the number of samples that had to be clipped.
std::size_t save_wav(const Waveform& w, const std::filesystem::path& path);

// In-place peak clip to [-1, 1]; returns the number of clipped samples.
std::size_t clip_samples(Waveform& w);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular HTK-mel filters, each row normalized to unit area.
Tensor mel_filterbank(const FeatureConfig& cfg);
// Center frequency (Hz) of every filter row.
std::vector<double> mel_center_frequencies(const FeatureConfig& cfg);

std::vector<double> hann_window(std::size_t n);

// Magnitude STFT (frames x n_bins) with the config's window, no centering.
Tensor magnitude_stft(const Waveform& w, const FeatureConfig& cfg);

MelSpectrogram mel_spectrogram(const Waveform& w, const FeatureConfig& cfg);

// Mel -> linear magnitude by least-squares inversion of the filterbank, then
// iterative phase recovery. Output is peak-normalized to 0.95.
Waveform griffin_lim(const MelSpectrogram& mel, int iters = 64);

// Thin wrapper over a real-to-complex FFT of fixed size.
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const { return n_; }
  // in: n real samples; out: n/2+1 bins.
  void forward(const double* in, std::complex<double>* out);
  // in: n/2+1 bins; out: n real samples, scaled by 1/n.
  void inverse(const std::complex<double>* in, double* out);

 private:
  std::size_t n_;
  void* forward_plan_ = nullptr;
  void* inverse_plan_ = nullptr;
  double* real_buf_ = nullptr;
  void* complex_buf_ = nullptr;
};

}  // namespace lssvc
