#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lssvc/audio.hpp"

namespace lssvc {

enum class PitchClass { Low = 0, High = 1 };
enum class RateClass { Slow = 0, Fast = 1 };
enum class Phonation { Clear = 0, Whispered = 1 };

inline constexpr int kNumClasses = 8;

struct StyleAttrs {
  PitchClass pitch = PitchClass::Low;
  RateClass rate = RateClass::Slow;
  Phonation phonation = Phonation::Clear;

  int class_index() const {
    return 4 * static_cast<int>(pitch) + 2 * static_cast<int>(rate) + static_cast<int>(phonation);
  }
  static StyleAttrs from_class(int index);
  double f0_hz() const { return pitch == PitchClass::High ? 260.0 : 120.0; }
  double syllables_per_second() const { return rate == RateClass::Fast ? 5.0 : 2.0; }

  friend bool operator==(const StyleAttrs&, const StyleAttrs&) = default;
};

std::string to_string(PitchClass p);
std::string to_string(RateClass r);
std::string to_string(Phonation p);

// Deterministic voice-like utterance: syllables at the class rate, each a
// harmonic (clear) or noise-dominated (whispered) excitation shaped by one of
// six two-formant envelopes picked by `content_seed`. Peak-normalized to 0.9.
Waveform gen_utterance(const StyleAttrs& attrs, std::uint64_t content_seed, double duration_s = 2.0,
                       int sample_rate = 16000);

inline constexpr int kNumPromptTemplates = 3;
std::string prompt_for(const StyleAttrs& attrs, int template_seed);

struct ManifestEntry {
  std::string wav;  // path relative to the manifest directory
  std::string prompt;
  StyleAttrs attrs;
  int class_index = 0;
  std::uint64_t seed = 0;
  std::string split;  // "train" or "eval"
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path root;  // directory holding manifest.json and the WAVs

  std::vector<const ManifestEntry*> split(const std::string& name) const;
  std::filesystem::path wav_path(const ManifestEntry& e) const { return root / e.wav; }
};

struct CorpusOptions {
  int n_per_class = 50;
  std::uint64_t seed = 1;
  double duration_s = 2.0;
  int sample_rate = 16000;
};

// Writes WAVs plus manifest.json under `out_dir` (80/20 train/eval per class).
CorpusManifest gen_corpus(const CorpusOptions& opts, const std::filesystem::path& out_dir);
// In-memory manifest (no files) with the same seeds and split as gen_corpus.
CorpusManifest plan_corpus(const CorpusOptions& opts);

void save_manifest(const CorpusManifest& m, const std::filesystem::path& path);
CorpusManifest load_manifest(const std::filesystem::path& path);

// ---- attribute oracles

// Median autocorrelation pitch over voiced frames; nullopt when no frame is
// voiced.
std::optional<double> estimate_f0(const Waveform& w);
// Envelope peaks per second.
double estimate_rate(const Waveform& w);
// Mean normalized-autocorrelation peak over high-energy frames, in [0, 1].
double estimate_hnr(const Waveform& w);

struct OracleThresholds {
  double f0_hz = 180.0;
  double rate = 3.5;
  double hnr = 0.7;
};

// Classifies each axis by thresholding the oracles.
struct AttributeGuess {
  std::optional<PitchClass> pitch;
  RateClass rate = RateClass::Slow;
  Phonation phonation = Phonation::Clear;
};
AttributeGuess classify_attributes(const Waveform& w, const OracleThresholds& th = {});

struct SeparabilityReport {
  double pitch_accuracy = 0.0;
  double rate_accuracy = 0.0;
  double phonation_accuracy = 0.0;
  int utterances = 0;
  bool passes(double min_accuracy = 0.95) const {
    return pitch_accuracy >= min_accuracy && rate_accuracy >= min_accuracy &&
           phonation_accuracy >= min_accuracy;
  }
};
// Generates `per_class` utterances per class and scores classify_attributes.
SeparabilityReport check_separability(int per_class, std::uint64_t seed, double duration_s = 2.0);

}  // namespace lssvc
