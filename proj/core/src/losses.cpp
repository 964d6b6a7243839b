#include "lssvc/losses.hpp"

#include <algorithm>
#include <cmath>

#include "lssvc/error.hpp"

namespace lssvc {

LossBreakdown total_loss(double rec, double style, double spk, const LossWeights& w) {
  if (!std::isfinite(rec)) throw NonFiniteError("non-finite loss term: rec");
  if (!std::isfinite(style)) throw NonFiniteError("non-finite loss term: style");
  if (!std::isfinite(spk)) throw NonFiniteError("non-finite loss term: spk");
  if (w.rec < 0.0 || w.style < 0.0 || w.spk < 0.0) throw InvalidArgument("loss weights must be >= 0");
  LossBreakdown out;
  out.rec = rec;
  out.style = style;
  out.spk = spk;
  out.weights = w;
  out.total = w.rec * rec + w.style * style + w.spk * spk;
  return out;
}

double rec_loss(const Tensor& x_hat, const Tensor& x) {
  if (x_hat.shape() != x.shape()) {
    throw InvalidArgument("rec_loss shape mismatch: " + shape_string(x_hat.shape()) + " vs " +
                          shape_string(x.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x_hat[i] - x[i]);
  return s / static_cast<double>(x.size());
}

double rec_loss_grad(const Tensor& x_hat, const Tensor& x, double scale, Tensor& grad) {
  const double v = rec_loss(x_hat, x);
  const double g = scale / static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = x_hat[i] - x[i];
    grad[i] += diff > 0.0 ? g : (diff < 0.0 ? -g : 0.0);
  }
  return v;
}

Tensor normalize_rows(const Tensor& x) {
  Tensor y = x;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = y.row(r);
    double n = 0.0;
    for (double v : row) n += v * v;
    n = std::sqrt(n) + 1e-8;
    for (double& v : row) v /= n;
  }
  return y;
}

Tensor normalize_rows_backward(const Tensor& x, const Tensor& d_y) {
  Tensor dx(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    auto gr = d_y.row(r);
    double sq = 0.0, dot = 0.0;
    for (std::size_t j = 0; j < xr.size(); ++j) {
      sq += xr[j] * xr[j];
      dot += xr[j] * gr[j];
    }
    const double norm = std::sqrt(sq);
    const double n = norm + 1e-8;
    auto out = dx.row(r);
    for (std::size_t j = 0; j < xr.size(); ++j) {
      out[j] = gr[j] / n;
      if (norm > 0.0) out[j] -= dot * xr[j] / (n * n * norm);
    }
  }
  return dx;
}

Tensor mean_over_time(const Tensor& seq, SeqShape shape) {
  const std::size_t f = seq.cols();
  Tensor out({shape.batch, f});
  for (std::size_t t = 0; t < shape.steps; ++t)
    for (std::size_t b = 0; b < shape.batch; ++b) {
      const double* src = seq.data() + (t * shape.batch + b) * f;
      for (std::size_t j = 0; j < f; ++j) out(b, j) += src[j];
    }
  const double inv = 1.0 / static_cast<double>(shape.steps);
  for (double& v : out.storage()) v *= inv;
  return out;
}

void mean_over_time_backward(const Tensor& d_pooled, SeqShape shape, Tensor& d_seq) {
  const std::size_t f = d_pooled.cols();
  const double inv = 1.0 / static_cast<double>(shape.steps);
  for (std::size_t t = 0; t < shape.steps; ++t)
    for (std::size_t b = 0; b < shape.batch; ++b) {
      double* dst = d_seq.data() + (t * shape.batch + b) * f;
      for (std::size_t j = 0; j < f; ++j) dst[j] += d_pooled(b, j) * inv;
    }
}

SummaryTrace audio_summary_forward(const ParamStore& p, const Tensor& states, SeqShape shape) {
  if (shape.steps < 1) throw InvalidArgument("audio_summary: empty trajectory");
  SummaryTrace tr;
  tr.pooled = mean_over_time(states, shape);
  tr.projected = affine_forward(tr.pooled, p.value("head.summary.W"), p.value("head.summary.b"));
  tr.embedding = normalize_rows(tr.projected);
  return tr;
}

void audio_summary_backward(ParamStore& p, const SummaryTrace& tr, const Tensor& d_embedding,
                            SeqShape shape, Tensor& d_states) {
  const Tensor d_proj = normalize_rows_backward(tr.projected, d_embedding);
  Tensor d_pooled;
  auto& w = p.entry("head.summary.W");
  affine_backward(tr.pooled, w.value, d_proj, w.grad, p.grad("head.summary.b"), &d_pooled);
  mean_over_time_backward(d_pooled, shape, d_states);
}

std::vector<double> audio_summary(const Tensor& states, const ParamStore& p) {
  const SummaryTrace tr = audio_summary_forward(p, states, SeqShape{states.rows(), 1});
  return tr.embedding.storage();
}

namespace {

// Row-wise log-softmax.
void log_softmax_rows(const Tensor& logits, Tensor& out) {
  out = logits;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = out.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double v : row) s += std::exp(v - mx);
    const double lse = mx + std::log(s);
    for (double& v : row) v -= lse;
  }
}

}  // namespace

StyleLossResult style_loss_grad(const Tensor& audio, const Tensor& text, double tau) {
  if (audio.rows() != text.rows() || audio.cols() != text.cols()) {
    throw InvalidArgument("style_loss: batch mismatch " + shape_string(audio.shape()) + " vs " +
                          shape_string(text.shape()));
  }
  if (!(tau > 0.0)) throw InvalidArgument("style_loss: tau must be > 0");
  const std::size_t n = audio.rows(), k = audio.cols();
  Tensor logits({n, n});
  kernel::gemm_nt(n, n, k, audio.data(), k, text.data(), k, logits.data(), n, false);
  for (double& v : logits.storage()) v /= tau;
  Tensor lsm_rows, lsm_cols;
  log_softmax_rows(logits, lsm_rows);
  log_softmax_rows(transpose(logits), lsm_cols);

  StyleLossResult res;
  double a2t = 0.0, t2a = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    a2t -= lsm_rows(i, i);
    t2a -= lsm_cols(i, i);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  res.value = 0.5 * (a2t * inv_n + t2a * inv_n);

  Tensor dlog({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double row_p = std::exp(lsm_rows(i, j)) - (i == j ? 1.0 : 0.0);
      const double col_p = std::exp(lsm_cols(j, i)) - (i == j ? 1.0 : 0.0);
      dlog(i, j) = 0.5 * inv_n * (row_p + col_p) / tau;
    }
  res.d_audio = Tensor({n, k});
  res.d_text = Tensor({n, k});
  kernel::gemm_nn(n, k, n, dlog.data(), n, text.data(), k, res.d_audio.data(), k, false);
  kernel::gemm_tn(n, k, n, dlog.data(), n, audio.data(), k, res.d_text.data(), k);
  return res;
}

double style_loss(const Tensor& audio, const Tensor& text, double tau) {
  return style_loss_grad(audio, text, tau).value;
}

CrossEntropyResult cross_entropy(const Tensor& logits, std::span<const int> targets) {
  const std::size_t n = logits.rows(), c = logits.cols();
  if (targets.size() != n) throw InvalidArgument("cross_entropy: target count mismatch");
  Tensor lsm;
  log_softmax_rows(logits, lsm);
  CrossEntropyResult res;
  res.d_logits = Tensor({n, c});
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int t = targets[i];
    if (t < 0 || static_cast<std::size_t>(t) >= c) {
      throw InvalidArgument("class index " + std::to_string(t) + " out of range [0, " +
                            std::to_string(c) + ")");
    }
    res.value -= lsm(i, static_cast<std::size_t>(t));
    for (std::size_t j = 0; j < c; ++j)
      res.d_logits(i, j) = (std::exp(lsm(i, j)) - (j == static_cast<std::size_t>(t) ? 1.0 : 0.0)) * inv_n;
  }
  res.value *= inv_n;
  return res;
}

void init_disc_params(ParamStore& disc, std::size_t n_mels, std::size_t hidden, std::size_t classes,
                      Rng& rng) {
  auto uniform = [&](Shape s, double k) {
    Tensor t(std::move(s));
    for (double& v : t.storage()) v = rng.uniform(-k, k);
    return t;
  };
  const double k1 = 1.0 / std::sqrt(static_cast<double>(n_mels));
  const double k2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  disc.add("disc.W1", uniform({hidden, n_mels}, k1));
  disc.add("disc.b1", uniform({hidden}, k1));
  disc.add("disc.W2", uniform({classes, hidden}, k2));
  disc.add("disc.b2", uniform({classes}, k2));
}

DiscTrace disc_forward(const ParamStore& disc, const Tensor& pooled) {
  DiscTrace tr;
  tr.input = pooled;
  tr.hidden_pre = affine_forward(pooled, disc.value("disc.W1"), disc.value("disc.b1"));
  tr.hidden = tr.hidden_pre;
  for (double& v : tr.hidden.storage()) v = std::max(v, 0.0);
  tr.logits = affine_forward(tr.hidden, disc.value("disc.W2"), disc.value("disc.b2"));
  return tr;
}

Tensor disc_backward(const ParamStore& disc, ParamStore* grads, const DiscTrace& tr,
                     const Tensor& d_logits) {
  const Tensor& w1 = disc.value("disc.W1");
  const Tensor& w2 = disc.value("disc.W2");
  Tensor scratch_w2(w2.shape()), scratch_b2({w2.dim(0)});
  Tensor scratch_w1(w1.shape()), scratch_b1({w1.dim(0)});
  Tensor& gw2 = grads ? grads->grad("disc.W2") : scratch_w2;
  Tensor& gb2 = grads ? grads->grad("disc.b2") : scratch_b2;
  Tensor& gw1 = grads ? grads->grad("disc.W1") : scratch_w1;
  Tensor& gb1 = grads ? grads->grad("disc.b1") : scratch_b1;
  Tensor d_hidden;
  affine_backward(tr.hidden, w2, d_logits, gw2, gb2, &d_hidden);
  for (std::size_t i = 0; i < d_hidden.size(); ++i)
    if (tr.hidden_pre[i] <= 0.0) d_hidden[i] = 0.0;
  Tensor d_input;
  affine_backward(tr.input, w1, d_hidden, gw1, gb1, &d_input);
  return d_input;
}

SpeakerLossResult speaker_loss(const Tensor& frames, int target_class, ParamStore& disc,
                               SpeakerMode mode) {
  const SeqShape shape{frames.rows(), 1};
  const Tensor pooled = mean_over_time(frames, shape);
  const DiscTrace tr = disc_forward(disc, pooled);
  const int targets[1] = {target_class};
  const CrossEntropyResult ce = cross_entropy(tr.logits, targets);
  SpeakerLossResult res;
  res.value = ce.value;
  if (mode == SpeakerMode::Discriminator) {
    disc_backward(disc, &disc, tr, ce.d_logits);
  } else {
    const Tensor d_pooled = disc_backward(disc, nullptr, tr, ce.d_logits);
    res.d_frames = Tensor(frames.shape());
    mean_over_time_backward(d_pooled, shape, res.d_frames);
  }
  return res;
}

}  // namespace lssvc
