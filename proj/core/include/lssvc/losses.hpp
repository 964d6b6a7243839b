#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lssvc/codec.hpp"
#include "lssvc/numerics.hpp"
#include "lssvc/rng.hpp"

namespace lssvc {

struct LossWeights {
  double rec = 1.0;
  double style = 2.0;
  double spk = 0.5;
};

struct LossBreakdown {
  double rec = 0.0;
  double style = 0.0;
  double spk = 0.0;
  double total = 0.0;
  LossWeights weights;
};

// Weighted sum rec*w.rec + style*w.style + spk*w.spk, always evaluated in that
// order. Throws NonFiniteError naming the offending term.
LossBreakdown total_loss(double rec, double style, double spk, const LossWeights& weights);

// Mean absolute difference over all cells.
double rec_loss(const Tensor& x_hat, const Tensor& x);
// Same, writing d/dx_hat (scaled by `scale`) into grad.
double rec_loss_grad(const Tensor& x_hat, const Tensor& x, double scale, Tensor& grad);

// x / (|x| + 1e-8) per row, and its backward pass.
Tensor normalize_rows(const Tensor& x);
Tensor normalize_rows_backward(const Tensor& x, const Tensor& d_y);

// Time-mean of each item of a time-major (T*B) x F sequence -> B x F.
Tensor mean_over_time(const Tensor& seq, SeqShape shape);
// Spreads d_pooled (B x F) back over T steps.
void mean_over_time_backward(const Tensor& d_pooled, SeqShape shape, Tensor& d_seq);

// Audio summary head: mean over time, affine d -> d_s, L2 normalization.
struct SummaryTrace {
  Tensor pooled;     // B x d
  Tensor projected;  // B x d_s, before normalization
  Tensor embedding;  // B x d_s, unit rows
};
SummaryTrace audio_summary_forward(const ParamStore& p, const Tensor& states, SeqShape shape);
// Accumulates head gradients, adds the state gradient into d_states.
void audio_summary_backward(ParamStore& p, const SummaryTrace& tr, const Tensor& d_embedding,
                            SeqShape shape, Tensor& d_states);
std::vector<double> audio_summary(const Tensor& states, const ParamStore& p);

// Symmetric InfoNCE over matched (audio_i, text_i) pairs with logits
// <a_i, t_j> / tau. Rows are expected to be unit vectors.
struct StyleLossResult {
  double value = 0.0;
  Tensor d_audio;
  Tensor d_text;
};
StyleLossResult style_loss_grad(const Tensor& audio, const Tensor& text, double tau);
double style_loss(const Tensor& audio, const Tensor& text, double tau = 0.07);

// Mean softmax cross-entropy over rows.
struct CrossEntropyResult {
  double value = 0.0;
  Tensor d_logits;
};
CrossEntropyResult cross_entropy(const Tensor& logits, std::span<const int> targets);

// Style-class discriminator on the time-mean of a mel sequence:
// affine M -> hd, ReLU, affine hd -> C.
struct DiscTrace {
  Tensor input;   // B x M
  Tensor hidden_pre;
  Tensor hidden;
  Tensor logits;  // B x C
};
void init_disc_params(ParamStore& disc, std::size_t n_mels, std::size_t hidden, std::size_t classes,
                      Rng& rng);
DiscTrace disc_forward(const ParamStore& disc, const Tensor& pooled);
// Returns d_input. Gradients go into `grads` unless it is null.
Tensor disc_backward(const ParamStore& disc, ParamStore* grads, const DiscTrace& tr,
                     const Tensor& d_logits);

enum class SpeakerMode { Generator, Discriminator };

struct SpeakerLossResult {
  double value = 0.0;
  Tensor d_frames;  // generator mode only: gradient w.r.t. the T x M frames
};

// Generator mode: CE of disc(x_hat) against the prompt's class; the
// discriminator is read-only. Discriminator mode: CE of disc(real frames)
// against the true class; gradients accumulate into the discriminator only.
SpeakerLossResult speaker_loss(const Tensor& frames, int target_class, ParamStore& disc,
                               SpeakerMode mode);

}  // namespace lssvc
