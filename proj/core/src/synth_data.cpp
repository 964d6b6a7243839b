#include "lssvc/synth_data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "lssvc/error.hpp"
#include "lssvc/rng.hpp"

namespace lssvc {

using json = nlohmann::json;

StyleAttrs StyleAttrs::from_class(int index) {
  if (index < 0 || index >= kNumClasses) {
    throw InvalidArgument("class index " + std::to_string(index) + " out of range");
  }
  StyleAttrs a;
  a.pitch = static_cast<PitchClass>((index >> 2) & 1);
  a.rate = static_cast<RateClass>((index >> 1) & 1);
  a.phonation = static_cast<Phonation>(index & 1);
  return a;
}

std::string to_string(PitchClass p) { return p == PitchClass::High ? "high" : "low"; }
std::string to_string(RateClass r) { return r == RateClass::Fast ? "fast" : "slow"; }
std::string to_string(Phonation p) { return p == Phonation::Whispered ? "whispered" : "clear"; }

namespace {

constexpr int kEnvelopeCount = 6;
constexpr int kMaxSyllables = 32;
// Share of whispered-syllable power carried by the (weak) harmonic component.
constexpr double kWhisperHarmonicPower = 0.5;

struct Formants {
  double f1, bw1, f2, bw2, a2;
};

const std::array<Formants, kEnvelopeCount>& formant_table() {
  static const std::array<Formants, kEnvelopeCount> table = [] {
    std::array<Formants, kEnvelopeCount> t{};
    Rng rng(0x5eedf0a7ULL);
    for (int i = 0; i < kEnvelopeCount; ++i) {
      // Spread F1 over 300..850 Hz and F2 over 1000..2600 Hz.
      const double slot = (static_cast<double>(i) + rng.uniform(0.1, 0.9)) / kEnvelopeCount;
      t[i].f1 = 300.0 + 550.0 * slot;
      t[i].bw1 = rng.uniform(150.0, 220.0);
      t[i].f2 = 1000.0 + 1600.0 * rng.uniform();
      t[i].bw2 = rng.uniform(200.0, 320.0);
      t[i].a2 = rng.uniform(0.5, 1.0);
    }
    return t;
  }();
  return table;
}

double envelope_gain(const Formants& f, double hz) {
  const double p1 = std::exp(-0.5 * std::pow((hz - f.f1) / f.bw1, 2.0));
  const double p2 = f.a2 * std::exp(-0.5 * std::pow((hz - f.f2) / f.bw2, 2.0));
  return (0.03 + p1 + p2) / (1.0 + hz / 2000.0);
}

struct SyllablePlan {
  int envelope;
  double amplitude;
  double f0_jitter;
  double onset_jitter;
};

std::array<SyllablePlan, kMaxSyllables> plan_syllables(std::uint64_t content_seed) {
  Rng rng(content_seed * 0x9e3779b97f4a7c15ULL + 0x1234567ULL);
  std::array<SyllablePlan, kMaxSyllables> plan{};
  for (auto& s : plan) {
    s.envelope = static_cast<int>(rng.below(kEnvelopeCount));
    s.amplitude = rng.uniform(0.75, 1.0);
    s.f0_jitter = rng.uniform(-0.05, 0.05);
    s.onset_jitter = rng.uniform(-0.05, 0.05);
  }
  return plan;
}

void harmonic_segment(const Formants& f, double f0, int sample_rate, std::vector<double>& out) {
  const double nyq_limit = 0.475 * sample_rate;
  const int harmonics = static_cast<int>(nyq_limit / f0);
  std::vector<double> gains(static_cast<std::size_t>(harmonics) + 1);
  for (int h = 1; h <= harmonics; ++h) gains[static_cast<std::size_t>(h)] = envelope_gain(f, h * f0);
  const double w = 2.0 * std::numbers::pi * f0 / sample_rate;
  for (std::size_t n = 0; n < out.size(); ++n) {
    double s = 0.0;
    for (int h = 1; h <= harmonics; ++h) s += gains[static_cast<std::size_t>(h)] * std::sin(w * h * static_cast<double>(n));
    out[n] = s;
  }
}

void noise_segment(const Formants& f, int sample_rate, Rng& rng, std::vector<double>& out) {
  const std::size_t n = out.size();
  std::size_t nfft = 1;
  while (nfft < n) nfft <<= 1;
  std::vector<double> buf(nfft, 0.0);
  for (std::size_t i = 0; i < n; ++i) buf[i] = rng.gaussian();
  RealFft fft(nfft);
  std::vector<std::complex<double>> spec(nfft / 2 + 1);
  fft.forward(buf.data(), spec.data());
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double hz = static_cast<double>(k) * sample_rate / static_cast<double>(nfft);
    spec[k] *= envelope_gain(f, hz);
  }
  fft.inverse(spec.data(), buf.data());
  std::copy(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(n), out.begin());
}

double rms(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return v.empty() ? 0.0 : std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

Waveform gen_utterance(const StyleAttrs& attrs, std::uint64_t content_seed, double duration_s,
                       int sample_rate) {
  if (!(duration_s > 0.0) || sample_rate <= 0) throw InvalidArgument("gen_utterance: bad duration/rate");
  const auto plan = plan_syllables(content_seed);
  const auto& formants = formant_table();
  const double rate = attrs.syllables_per_second();
  const double period = 1.0 / rate;
  const auto total = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.assign(total, 0.0);

  Rng noise_rng(content_seed ^ (0xa5a5a5a5ULL * static_cast<std::uint64_t>(attrs.class_index() + 1)));
  const auto count = std::min<int>(kMaxSyllables, static_cast<int>(std::floor(duration_s * rate + 1e-9)));
  for (int k = 0; k < count; ++k) {
    const SyllablePlan& syl = plan[static_cast<std::size_t>(k)];
    const double onset = (k + 0.2 + syl.onset_jitter) * period;
    const double length = 0.6 * period;
    const auto start = static_cast<std::size_t>(std::llround(onset * sample_rate));
    auto len = static_cast<std::size_t>(std::llround(length * sample_rate));
    if (start >= total) break;
    len = std::min(len, total - start);
    const Formants& f = formants[static_cast<std::size_t>(syl.envelope)];
    const double f0 = attrs.f0_hz() * (1.0 + syl.f0_jitter);

    std::vector<double> seg(len);
    harmonic_segment(f, f0, sample_rate, seg);
    if (attrs.phonation == Phonation::Whispered) {
      std::vector<double> noise(len);
      noise_segment(f, sample_rate, noise_rng, noise);
      const double hr = rms(seg), nr = rms(noise);
      const double gh = std::sqrt(kWhisperHarmonicPower) / (hr > 0 ? hr : 1.0);
      const double gn = std::sqrt(1.0 - kWhisperHarmonicPower) / (nr > 0 ? nr : 1.0);
      for (std::size_t i = 0; i < len; ++i) seg[i] = gh * seg[i] + gn * noise[i];
    } else {
      const double hr = rms(seg);
      for (double& x : seg) x /= (hr > 0 ? hr : 1.0);
    }
    for (std::size_t i = 0; i < len; ++i) {
      const double env = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                                   static_cast<double>(len));
      w.samples[start + i] += syl.amplitude * env * seg[i];
    }
  }
  double peak = 0.0;
  for (double s : w.samples) peak = std::max(peak, std::abs(s));
  if (peak > 0.0)
    for (double& s : w.samples) s *= 0.9 / peak;
  clip_samples(w);
  return w;
}

std::string prompt_for(const StyleAttrs& attrs, int template_seed) {
  const std::string pitch = attrs.pitch == PitchClass::High ? "high-pitched" : "low-pitched";
  const std::string rate = to_string(attrs.rate);
  const std::string phon = to_string(attrs.phonation);
  const int t = ((template_seed % kNumPromptTemplates) + kNumPromptTemplates) % kNumPromptTemplates;
  switch (t) {
    case 0: return "a " + pitch + " " + rate + " " + phon + " voice";
    case 1: return rate + " speech in a " + pitch + " " + phon + " tone";
    default: return phon + ", " + rate + " and " + pitch;
  }
}

// ---------------------------------------------------------------- corpus

std::vector<const ManifestEntry*> CorpusManifest::split(const std::string& name) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.split == name) out.push_back(&e);
  return out;
}

CorpusManifest plan_corpus(const CorpusOptions& opts) {
  if (opts.n_per_class < 2) throw InvalidArgument("n_per_class must be >= 2");
  CorpusManifest m;
  Rng rng(opts.seed);
  const int n_train = std::max(1, std::min(opts.n_per_class - 1,
                                           static_cast<int>(std::lround(0.8 * opts.n_per_class))));
  for (int c = 0; c < kNumClasses; ++c) {
    const StyleAttrs attrs = StyleAttrs::from_class(c);
    for (int i = 0; i < opts.n_per_class; ++i) {
      ManifestEntry e;
      e.attrs = attrs;
      e.class_index = c;
      e.seed = rng.next_u64() >> 11;
      e.prompt = prompt_for(attrs, static_cast<int>(rng.below(kNumPromptTemplates)));
      e.split = i < n_train ? "train" : "eval";
      e.wav = "wav/c" + std::to_string(c) + "_" + std::to_string(i) + ".wav";
      m.entries.push_back(std::move(e));
    }
  }
  return m;
}

CorpusManifest gen_corpus(const CorpusOptions& opts, const std::filesystem::path& out_dir) {
  CorpusManifest m = plan_corpus(opts);
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "wav", ec);
  if (ec) throw IoError("cannot create corpus directory " + out_dir.string() + ": " + ec.message());
  m.root = out_dir;
  for (const auto& e : m.entries) {
    const Waveform w = gen_utterance(e.attrs, e.seed, opts.duration_s, opts.sample_rate);
    save_wav(w, out_dir / e.wav);
  }
  save_manifest(m, out_dir / "manifest.json");
  return m;
}

void save_manifest(const CorpusManifest& m, const std::filesystem::path& path) {
  json arr = json::array();
  for (const auto& e : m.entries) {
    arr.push_back({{"wav", e.wav},
                   {"prompt", e.prompt},
                   {"class", e.class_index},
                   {"pitch", to_string(e.attrs.pitch)},
                   {"rate", to_string(e.attrs.rate)},
                   {"phonation", to_string(e.attrs.phonation)},
                   {"seed", e.seed},
                   {"split", e.split}});
  }
  std::ofstream f(path);
  if (!f) throw IoError("cannot write manifest " + path.string());
  f << arr.dump(2) << '\n';
}

CorpusManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read manifest " + path.string());
  CorpusManifest m;
  m.root = path.parent_path();
  try {
    const json arr = json::parse(f);
    if (!arr.is_array()) throw IoError("manifest must be a JSON array");
    for (const auto& o : arr) {
      ManifestEntry e;
      e.wav = o.at("wav").get<std::string>();
      e.prompt = o.at("prompt").get<std::string>();
      e.class_index = o.at("class").get<int>();
      e.attrs = StyleAttrs::from_class(e.class_index);
      if (o.at("pitch").get<std::string>() != to_string(e.attrs.pitch) ||
          o.at("rate").get<std::string>() != to_string(e.attrs.rate) ||
          o.at("phonation").get<std::string>() != to_string(e.attrs.phonation)) {
        throw IoError("manifest entry " + e.wav + ": attributes disagree with class index");
      }
      e.seed = o.at("seed").get<std::uint64_t>();
      e.split = o.at("split").get<std::string>();
      if (e.split != "train" && e.split != "eval") throw IoError("bad split tag: " + e.split);
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& ex) {
    throw IoError("malformed manifest " + path.string() + ": " + ex.what());
  }
  return m;
}

// ---------------------------------------------------------------- oracles

namespace {

constexpr std::size_t kOracleFrame = 640;  // 40 ms at 16 kHz
constexpr std::size_t kOracleHop = 160;
constexpr double kVoicingThreshold = 0.2;
constexpr double kOctaveRatio = 0.7;

struct FrameAnalysis {
  double peak = 0.0;  // best normalized autocorrelation in the pitch band
  double lag = 0.0;   // refined lag of the chosen period (0 when unvoiced)
};

std::vector<double> frame_energies(const Waveform& w, std::size_t frame, std::size_t hop) {
  std::vector<double> e;
  if (w.samples.size() < frame) return e;
  for (std::size_t s = 0; s + frame <= w.samples.size(); s += hop) {
    double acc = 0.0;
    for (std::size_t i = 0; i < frame; ++i) acc += w.samples[s + i] * w.samples[s + i];
    e.push_back(acc / static_cast<double>(frame));
  }
  return e;
}

FrameAnalysis analyze_frame(const double* x, std::size_t n, int sample_rate) {
  const auto min_lag = static_cast<std::size_t>(std::floor(sample_rate / 400.0));
  const auto max_lag = static_cast<std::size_t>(std::ceil(sample_rate / 50.0));
  FrameAnalysis fa;
  if (n < max_lag + 2 + min_lag) return fa;
  // Fixed comparison window so every lag is scored over the same number of
  // samples.
  const std::size_t win = n - max_lag - 1;
  std::vector<double> buf(x, x + n);
  double mean = 0.0;
  for (double v : buf) mean += v;
  mean /= static_cast<double>(n);
  for (double& v : buf) v -= mean;
  double xx = 0.0;
  for (std::size_t i = 0; i < win; ++i) xx += buf[i] * buf[i];
  std::vector<double> nccf(max_lag + 2, 0.0);
  for (std::size_t lag = min_lag - 1; lag <= max_lag + 1; ++lag) {
    double xy = 0.0, yy = 0.0;
    for (std::size_t i = 0; i < win; ++i) {
      xy += buf[i] * buf[i + lag];
      yy += buf[i + lag] * buf[i + lag];
    }
    nccf[lag] = (xx > 0 && yy > 0) ? xy / std::sqrt(xx * yy) : 0.0;
  }
  for (std::size_t lag = min_lag; lag <= max_lag; ++lag) fa.peak = std::max(fa.peak, nccf[lag]);
  fa.peak = std::clamp(fa.peak, 0.0, 1.0);
  if (fa.peak < kVoicingThreshold) return fa;
  // Shortest lag whose local maximum reaches kOctaveRatio of the best peak; guards
  // against picking a multiple of the true period.
  for (std::size_t lag = min_lag; lag <= max_lag; ++lag) {
    if (nccf[lag] >= kOctaveRatio * fa.peak && nccf[lag] >= nccf[lag - 1] && nccf[lag] >= nccf[lag + 1]) {
      const double a = nccf[lag - 1], b = nccf[lag], c = nccf[lag + 1];
      const double denom = a - 2.0 * b + c;
      const double shift = denom != 0.0 ? 0.5 * (a - c) / denom : 0.0;
      fa.lag = static_cast<double>(lag) + std::clamp(shift, -0.5, 0.5);
      break;
    }
  }
  return fa;
}

// Frames whose energy is at least a quarter of the loudest frame.
std::vector<std::size_t> loud_frames(const std::vector<double>& energies) {
  std::vector<std::size_t> idx;
  if (energies.empty()) return idx;
  const double mx = *std::max_element(energies.begin(), energies.end());
  if (mx <= 1e-12) return idx;
  for (std::size_t i = 0; i < energies.size(); ++i)
    if (energies[i] >= 0.25 * mx) idx.push_back(i);
  return idx;
}

}  // namespace

std::optional<double> estimate_f0(const Waveform& w) {
  const auto energies = frame_energies(w, kOracleFrame, kOracleHop);
  std::vector<double> f0s;
  for (std::size_t i : loud_frames(energies)) {
    const FrameAnalysis fa = analyze_frame(w.samples.data() + i * kOracleHop, kOracleFrame, w.sample_rate);
    if (fa.lag > 0.0) f0s.push_back(static_cast<double>(w.sample_rate) / fa.lag);
  }
  if (f0s.empty()) return std::nullopt;
  std::sort(f0s.begin(), f0s.end());
  const std::size_t mid = f0s.size() / 2;
  return f0s.size() % 2 ? f0s[mid] : 0.5 * (f0s[mid - 1] + f0s[mid]);
}

double estimate_hnr(const Waveform& w) {
  const auto energies = frame_energies(w, kOracleFrame, kOracleHop);
  const auto frames = loud_frames(energies);
  if (frames.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i : frames)
    acc += analyze_frame(w.samples.data() + i * kOracleHop, kOracleFrame, w.sample_rate).peak;
  return acc / static_cast<double>(frames.size());
}

double estimate_rate(const Waveform& w) {
  const std::size_t hop = static_cast<std::size_t>(w.sample_rate / 100);
  const std::size_t win = static_cast<std::size_t>(w.sample_rate / 20);
  const auto env = frame_energies(w, win, hop);
  if (env.size() < 3) return 0.0;
  const double mx = *std::max_element(env.begin(), env.end());
  if (mx <= 1e-12) return 0.0;
  const double half = 0.5 * mx;
  // One peak per contiguous run above half the maximum; ripple near the top
  // of a syllable does not add peaks.
  int peaks = 0;
  bool above = false;
  for (double v : env) {
    if (v >= half && !above) ++peaks;
    above = v >= half;
  }
  return static_cast<double>(peaks) / w.duration();
}

AttributeGuess classify_attributes(const Waveform& w, const OracleThresholds& th) {
  AttributeGuess g;
  if (const auto f0 = estimate_f0(w)) g.pitch = *f0 >= th.f0_hz ? PitchClass::High : PitchClass::Low;
  g.rate = estimate_rate(w) >= th.rate ? RateClass::Fast : RateClass::Slow;
  g.phonation = estimate_hnr(w) >= th.hnr ? Phonation::Clear : Phonation::Whispered;
  return g;
}

SeparabilityReport check_separability(int per_class, std::uint64_t seed, double duration_s) {
  SeparabilityReport r;
  Rng rng(seed);
  int pitch_ok = 0, rate_ok = 0, phon_ok = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    const StyleAttrs attrs = StyleAttrs::from_class(c);
    for (int i = 0; i < per_class; ++i) {
      const Waveform w = gen_utterance(attrs, rng.next_u64() >> 11, duration_s);
      const AttributeGuess g = classify_attributes(w);
      pitch_ok += g.pitch && *g.pitch == attrs.pitch;
      rate_ok += g.rate == attrs.rate;
      phon_ok += g.phonation == attrs.phonation;
      ++r.utterances;
    }
  }
  r.pitch_accuracy = static_cast<double>(pitch_ok) / r.utterances;
  r.rate_accuracy = static_cast<double>(rate_ok) / r.utterances;
  r.phonation_accuracy = static_cast<double>(phon_ok) / r.utterances;
  return r;
}

}  // namespace lssvc
