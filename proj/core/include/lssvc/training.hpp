#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lssvc/audio.hpp"
#include "lssvc/checkpoint.hpp"
#include "lssvc/losses.hpp"
#include "lssvc/model.hpp"
#include "lssvc/ssm.hpp"
#include "lssvc/synth_data.hpp"

namespace lssvc {

struct TrainingConfig {
  double lr = 1e-4;
  std::int64_t steps = 20000;
  std::size_t batch_size = 8;
  LossWeights weights;
  double tau = 0.07;
  std::uint64_t seed = 1;
  bool deterministic = true;
  std::int64_t disc_update_every = 1;
  Ablation ablation = Ablation::None;
  // Random crop length in frames; 0 trains on whole utterances.
  std::size_t crop_frames = 64;
  std::int64_t log_every = 100;
  // Run the attribute-separability gate on the training audio first.
  bool check_corpus = true;

  void validate() const;
};

std::string training_config_json(const TrainingConfig& cfg);

// One utterance ready for training or evaluation.
struct Example {
  Tensor mel;  // T x M
  Waveform wave;
  std::string prompt;
  StyleAttrs attrs;
  int class_index = 0;
  std::uint64_t seed = 0;
};

std::vector<Example> load_examples(const CorpusManifest& manifest, const std::string& split,
                                   const FeatureConfig& features);

// Oracle accuracy per axis on the examples' own audio.
SeparabilityReport corpus_separability(const std::vector<Example>& examples);

struct TrainLogEntry {
  std::int64_t step = 0;
  LossBreakdown loss;
  double disc_loss = 0.0;
  double a_norm = 0.0;  // spectral-norm estimate of A after the step
};
using TrainLogger = std::function<void(const TrainLogEntry&)>;

// Mean reconstruction loss of whole utterances under their own prompts.
double mean_rec_loss(const Model& m, const std::vector<Example>& examples);

Checkpoint train(const TrainingConfig& cfg, const ModelDims& dims, const FeatureConfig& features,
                 const std::vector<Example>& train_set, const TrainLogger& log = {});

// Loads the manifest's train split and trains on it.
Checkpoint train(const TrainingConfig& cfg, const ModelDims& dims, const FeatureConfig& features,
                 const CorpusManifest& manifest, const TrainLogger& log = {});

// mel(w) -> encode -> rollout under the prompt -> decode -> Griffin-Lim.
Waveform convert(const Waveform& w, const std::string& prompt, const Checkpoint& ckpt,
                 int gl_iters = 64, LatentTrajectory* traj = nullptr);

}  // namespace lssvc
