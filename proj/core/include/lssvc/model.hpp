#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lssvc/audio.hpp"
#include "lssvc/codec.hpp"
#include "lssvc/losses.hpp"
#include "lssvc/numerics.hpp"
#include "lssvc/ssm.hpp"
#include "lssvc/style_encoder.hpp"

namespace lssvc {

struct ModelDims {
  std::size_t n_mels = 80;       // M
  std::size_t hidden = 64;       // h
  std::size_t layers = 2;        // GRU layers on each side
  std::size_t latent = 32;       // d (= d_g)
  std::size_t style = 16;        // d_s
  std::size_t frozen = kFrozenDim;  // d_lm
  std::size_t classes = 8;       // C
  std::size_t disc_hidden = 64;

  void validate() const;
  CodecDims codec() const { return {n_mels, hidden, layers, latent}; }
  SsmDims ssm() const { return {latent, style}; }
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

// Every trainable tensor of the generator (codec, state space, style
// projection, audio summary head) plus the style-class discriminator, which
// has its own optimizer state.
struct Model {
  ModelDims dims;
  Ablation ablation = Ablation::None;
  std::uint64_t text_seed = 0;
  double log_floor = -11.512925464970229;  // log(1e-5)
  ParamStore gen;
  ParamStore disc;

  std::vector<double> frozen_embedding(const std::string& prompt) const;
  // S for a single prompt.
  std::vector<double> style_vector(const std::string& prompt) const;
};

Model init_model(const ModelDims& dims, Ablation ablation, std::uint64_t seed, double log_floor,
                 std::uint64_t text_seed = 0);

// Sets every state-space tensor (transition, offset, gate, concat) to zero.
void zero_state_space(Model& m);

// A batch of equal-length mel crops, time-major.
struct Batch {
  SeqShape shape;
  Tensor mel;     // (T*B) x M
  Tensor frozen;  // B x d_lm
  std::vector<int> classes;
};

// Items are T x M mels; all must share T.
Batch make_batch(const Model& m, const std::vector<const Tensor*>& mels,
                 const std::vector<std::string>& prompts, const std::vector<int>& classes);

struct ForwardOutputs {
  Tensor style;  // B x d_s
  StackTrace enc;
  LatentTrajectory traj;
  DecodeResult dec;
  SummaryTrace summary;
  Tensor text;  // normalized S rows
  DiscTrace disc;
  LossBreakdown loss;

  Tensor x_hat(std::size_t b) const;  // T x M for item b
};

struct LossConfig {
  LossWeights weights;
  double tau = 0.07;
};

// Full generator pass. With `with_grad`, accumulates generator gradients for
// the weighted total; the discriminator is read-only.
ForwardOutputs forward(Model& m, const Batch& batch, const LossConfig& cfg, bool with_grad);

// Cross-entropy of the discriminator on real frames against the true class;
// accumulates discriminator gradients only. Returns the loss.
double discriminator_loss(Model& m, const Batch& batch, bool with_grad);

struct Conversion {
  Tensor mel;  // T x M decoded log-mel
  LatentTrajectory traj;
};

// encode -> rollout under the prompt's S -> decode, for one T x M mel.
Conversion convert_mel(const Model& m, const Tensor& mel, const std::string& prompt);

}  // namespace lssvc

namespace lssvc {

struct ModelGradCheckOptions {
  std::uint64_t seed = 7;
  Ablation ablation = Ablation::None;
  double h = 1e-4;
  std::size_t steps = 12;
  std::size_t batch = 2;
};

// Central-difference check of every generator parameter of a tiny model
// (M = h = d = 8, d_s = 4) under the full weighted loss with all three terms.
GradCheckReport model_grad_check(const ModelGradCheckOptions& opts = {});

}  // namespace lssvc
