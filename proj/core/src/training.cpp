#include "lssvc/training.hpp"

#include <cmath>
#include <numeric>

#include <json.hpp>

#include "lssvc/error.hpp"

namespace lssvc {

using json = nlohmann::json;

void TrainingConfig::validate() const {
  if (!(lr > 0.0)) throw InvalidArgument("lr must be > 0");
  if (steps < 0) throw InvalidArgument("steps must be >= 0");
  if (batch_size == 0) throw InvalidArgument("batch_size must be >= 1");
  if (weights.rec < 0.0 || weights.style < 0.0 || weights.spk < 0.0)
    throw InvalidArgument("loss weights must be >= 0");
  if (!(tau > 0.0)) throw InvalidArgument("tau must be > 0");
  if (disc_update_every < 1) throw InvalidArgument("disc_update_every must be >= 1");
  if (log_every < 1) throw InvalidArgument("log_every must be >= 1");
}

std::string training_config_json(const TrainingConfig& c) {
  const json j = {{"lr", c.lr},
                  {"steps", c.steps},
                  {"batch_size", c.batch_size},
                  {"lambda_rec", c.weights.rec},
                  {"lambda_style", c.weights.style},
                  {"lambda_spk", c.weights.spk},
                  {"tau", c.tau},
                  {"seed", c.seed},
                  {"deterministic", c.deterministic},
                  {"disc_update_every", c.disc_update_every},
                  {"ablation", std::string(ablation_name(c.ablation))},
                  {"crop_frames", c.crop_frames},
                  {"log_every", c.log_every},
                  {"check_corpus", c.check_corpus}};
  return j.dump();
}

std::vector<Example> load_examples(const CorpusManifest& manifest, const std::string& split,
                                   const FeatureConfig& features) {
  std::vector<Example> out;
  for (const ManifestEntry* e : manifest.split(split)) {
    Example ex;
    ex.wave = load_wav(manifest.wav_path(*e));
    if (ex.wave.sample_rate != features.sample_rate) {
      throw InvalidArgument(e->wav + ": sample rate " + std::to_string(ex.wave.sample_rate) +
                            " does not match the feature config");
    }
    ex.mel = mel_spectrogram(ex.wave, features).frames;
    ex.prompt = e->prompt;
    ex.attrs = e->attrs;
    ex.class_index = e->class_index;
    ex.seed = e->seed;
    out.push_back(std::move(ex));
  }
  return out;
}

SeparabilityReport corpus_separability(const std::vector<Example>& examples) {
  SeparabilityReport r;
  int pitch = 0, rate = 0, phon = 0;
  for (const Example& ex : examples) {
    const AttributeGuess g = classify_attributes(ex.wave);
    pitch += g.pitch && *g.pitch == ex.attrs.pitch;
    rate += g.rate == ex.attrs.rate;
    phon += g.phonation == ex.attrs.phonation;
  }
  r.utterances = static_cast<int>(examples.size());
  if (r.utterances > 0) {
    const double n = r.utterances;
    r.pitch_accuracy = pitch / n;
    r.rate_accuracy = rate / n;
    r.phonation_accuracy = phon / n;
  }
  return r;
}

double mean_rec_loss(const Model& m, const std::vector<Example>& examples) {
  if (examples.empty()) throw InvalidArgument("mean_rec_loss: no examples");
  double s = 0.0;
  for (const Example& ex : examples) s += rec_loss(convert_mel(m, ex.mel, ex.prompt).mel, ex.mel);
  return s / static_cast<double>(examples.size());
}

Checkpoint train(const TrainingConfig& cfg, const ModelDims& dims, const FeatureConfig& features,
                 const std::vector<Example>& train_set, const TrainLogger& log) {
  cfg.validate();
  features.validate();
  if (dims.n_mels != features.n_mels) throw InvalidArgument("dims.n_mels differs from the feature config");
  if (train_set.empty()) throw InvalidArgument("training set is empty");
  if (cfg.check_corpus) {
    const SeparabilityReport sep = corpus_separability(train_set);
    if (!sep.passes()) {
      throw InvalidArgument("corpus fails the attribute-separability gate (pitch " +
                            std::to_string(sep.pitch_accuracy) + ", rate " +
                            std::to_string(sep.rate_accuracy) + ", phonation " +
                            std::to_string(sep.phonation_accuracy) + ")");
    }
  }
  std::size_t min_frames = train_set.front().mel.rows();
  for (const Example& ex : train_set) {
    if (ex.mel.cols() != dims.n_mels) throw InvalidArgument("training mel has the wrong band count");
    min_frames = std::min(min_frames, ex.mel.rows());
  }
  const std::size_t frames = cfg.crop_frames > 0 ? std::min(cfg.crop_frames, min_frames) : min_frames;
  if (frames < 2) throw InvalidArgument("training utterances are too short");

  Checkpoint ck;
  ck.model = init_model(dims, cfg.ablation, cfg.seed, features.min_log_value());
  ck.features = features;
  ck.config_json = training_config_json(cfg);
  Model& m = ck.model;
  constrain_A(m.gen);
  m.gen.round_to_float();

  AdamHyper gen_opt{.lr = cfg.lr};
  AdamHyper disc_opt{.lr = cfg.lr};
  const LossConfig loss_cfg{cfg.weights, cfg.tau};
  Rng rng(cfg.seed ^ 0x747261696e5f6c6fULL);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();

  std::vector<Tensor> crops(cfg.batch_size);
  std::vector<const Tensor*> ptrs(cfg.batch_size);
  std::vector<std::string> prompts(cfg.batch_size);
  std::vector<int> classes(cfg.batch_size);

  for (std::int64_t step = 0; step < cfg.steps; ++step) {
    for (std::size_t i = 0; i < cfg.batch_size; ++i) {
      if (cursor == order.size()) {
        rng.shuffle(order.begin(), order.end());
        cursor = 0;
      }
      const Example& ex = train_set[order[cursor++]];
      const std::size_t t0 = ex.mel.rows() > frames ? rng.below(ex.mel.rows() - frames + 1) : 0;
      crops[i] = Tensor({frames, dims.n_mels});
      std::copy(ex.mel.data() + t0 * dims.n_mels, ex.mel.data() + (t0 + frames) * dims.n_mels,
                crops[i].data());
      ptrs[i] = &crops[i];
      prompts[i] = ex.prompt;
      classes[i] = ex.class_index;
    }
    const Batch batch = make_batch(m, ptrs, prompts, classes);

    TrainLogEntry entry;
    entry.step = step;
    try {
      entry.loss = forward(m, batch, loss_cfg, true).loss;
      adam_step(m.gen, gen_opt);
      constrain_A(m.gen);
      m.gen.round_to_float();
      if (step % cfg.disc_update_every == 0) {
        entry.disc_loss = discriminator_loss(m, batch, true);
        adam_step(m.disc, disc_opt);
        m.disc.round_to_float();
      }
    } catch (const NonFiniteError& e) {
      throw NonFiniteError("step " + std::to_string(step) + ": " + e.what());
    }
    if (m.gen.contains("ssm.A")) entry.a_norm = spectral_norm_estimate(m.gen.value("ssm.A"));
    if (log && (step % cfg.log_every == 0 || step + 1 == cfg.steps)) log(entry);
  }
  ck.step = cfg.steps;
  return ck;
}

Checkpoint train(const TrainingConfig& cfg, const ModelDims& dims, const FeatureConfig& features,
                 const CorpusManifest& manifest, const TrainLogger& log) {
  return train(cfg, dims, features, load_examples(manifest, "train", features), log);
}

Waveform convert(const Waveform& w, const std::string& prompt, const Checkpoint& ckpt, int gl_iters,
                 LatentTrajectory* traj) {
  const FeatureConfig& fc = ckpt.features;
  if (ckpt.model.dims.n_mels != fc.n_mels) {
    throw InvalidArgument("checkpoint dims (n_mels " + std::to_string(ckpt.model.dims.n_mels) +
                          ") incompatible with its feature config (n_mels " + std::to_string(fc.n_mels) + ")");
  }
  if (w.sample_rate != fc.sample_rate) {
    throw InvalidArgument("input sample rate " + std::to_string(w.sample_rate) + " differs from the model's " +
                          std::to_string(fc.sample_rate));
  }
  const MelSpectrogram mel = mel_spectrogram(w, fc);
  Conversion c = convert_mel(ckpt.model, mel.frames, prompt);
  if (traj) *traj = std::move(c.traj);
  return griffin_lim(MelSpectrogram{std::move(c.mel), fc}, gl_iters);
}

}  // namespace lssvc
