#include "lssvc/model.hpp"

#include <cmath>

#include "lssvc/error.hpp"

namespace lssvc {

void ModelDims::validate() const {
  if (n_mels == 0 || hidden == 0 || layers == 0 || latent == 0 || style == 0 || frozen == 0 ||
      classes < 2 || disc_hidden == 0) {
    throw InvalidArgument("model dims must be positive (classes >= 2)");
  }
}

std::vector<double> Model::frozen_embedding(const std::string& prompt) const {
  std::vector<double> f = embed_frozen(StylePrompt{prompt}, text_seed);
  if (f.size() != dims.frozen) {
    throw InvalidArgument("frozen embedding has size " + std::to_string(f.size()) + ", model expects " +
                          std::to_string(dims.frozen));
  }
  return f;
}

std::vector<double> Model::style_vector(const std::string& prompt) const {
  return project_style(frozen_embedding(prompt), gen.value("style.W"), gen.value("style.b"));
}

Model init_model(const ModelDims& dims, Ablation ablation, std::uint64_t seed, double log_floor,
                 std::uint64_t text_seed) {
  dims.validate();
  Model m;
  m.dims = dims;
  m.ablation = ablation;
  m.text_seed = text_seed;
  m.log_floor = log_floor;
  Rng rng(seed);
  init_codec_params(m.gen, dims.codec(), rng);
  init_ssm_params(m.gen, dims.ssm(), ablation, rng);
  auto uniform = [&](Shape s, double k) {
    Tensor t(std::move(s));
    for (double& v : t.storage()) v = rng.uniform(-k, k);
    return t;
  };
  const double ks = 1.0 / std::sqrt(static_cast<double>(dims.frozen));
  m.gen.add("style.W", uniform({dims.style, dims.frozen}, ks));
  m.gen.add("style.b", uniform({dims.style}, ks));
  const double kh = 1.0 / std::sqrt(static_cast<double>(dims.latent));
  m.gen.add("head.summary.W", uniform({dims.style, dims.latent}, kh));
  m.gen.add("head.summary.b", uniform({dims.style}, kh));
  init_disc_params(m.disc, dims.n_mels, dims.disc_hidden, dims.classes, rng);
  m.gen.round_to_float();
  m.disc.round_to_float();
  return m;
}

void zero_state_space(Model& m) {
  for (auto& e : m.gen.entries())
    if (e.name.starts_with("ssm.")) e.value.fill(0.0);
}

Batch make_batch(const Model& m, const std::vector<const Tensor*>& mels,
                 const std::vector<std::string>& prompts, const std::vector<int>& classes) {
  const std::size_t bsz = mels.size();
  if (bsz == 0) throw InvalidArgument("empty batch");
  if (prompts.size() != bsz || classes.size() != bsz)
    throw InvalidArgument("batch: mels, prompts and classes differ in length");
  const std::size_t steps = mels[0]->rows(), nm = m.dims.n_mels;
  Batch b;
  b.shape = SeqShape{steps, bsz};
  b.mel = Tensor({steps * bsz, nm});
  b.frozen = Tensor({bsz, m.dims.frozen});
  b.classes = classes;
  for (std::size_t i = 0; i < bsz; ++i) {
    const Tensor& x = *mels[i];
    if (x.rows() != steps || x.cols() != nm) {
      throw InvalidArgument("batch item " + std::to_string(i) + " has shape " + shape_string(x.shape()) +
                            ", expected " + std::to_string(steps) + "x" + std::to_string(nm));
    }
    for (std::size_t t = 0; t < steps; ++t) {
      auto src = x.row(t);
      std::copy(src.begin(), src.end(), b.mel.row(t * bsz + i).begin());
    }
    const auto f = m.frozen_embedding(prompts[i]);
    std::copy(f.begin(), f.end(), b.frozen.row(i).begin());
    const int c = classes[i];
    if (c < 0 || static_cast<std::size_t>(c) >= m.dims.classes)
      throw InvalidArgument("class index " + std::to_string(c) + " out of range");
  }
  return b;
}

Tensor ForwardOutputs::x_hat(std::size_t b) const {
  const SeqShape s = traj.shape;
  const std::size_t nm = dec.frames.cols();
  Tensor out({s.steps, nm});
  for (std::size_t t = 0; t < s.steps; ++t) {
    auto src = dec.frames.row(t * s.batch + b);
    std::copy(src.begin(), src.end(), out.row(t).begin());
  }
  return out;
}

ForwardOutputs forward(Model& m, const Batch& batch, const LossConfig& cfg, bool with_grad) {
  const CodecDims cd = m.dims.codec();
  const SeqShape shape = batch.shape;
  const LossWeights& w = cfg.weights;
  ForwardOutputs out;
  out.style = affine_forward(batch.frozen, m.gen.value("style.W"), m.gen.value("style.b"));
  out.enc = encode_forward(m.gen, cd, batch.mel, shape);
  out.traj = rollout(m.gen, m.ablation, out.enc.head_out, out.style, shape);
  out.dec = decode_forward(m.gen, cd, out.traj.states, shape, m.log_floor);

  const double rec = rec_loss(out.dec.frames, batch.mel);

  out.summary = audio_summary_forward(m.gen, out.traj.states, shape);
  out.text = normalize_rows(out.style);
  StyleLossResult st = style_loss_grad(out.summary.embedding, out.text, cfg.tau);

  const Tensor pooled = mean_over_time(out.dec.frames, shape);
  out.disc = disc_forward(m.disc, pooled);
  const CrossEntropyResult ce = cross_entropy(out.disc.logits, batch.classes);

  out.loss = total_loss(rec, st.value, ce.value, w);
  if (!with_grad) return out;

  Tensor d_frames(out.dec.frames.shape());
  if (w.rec != 0.0) rec_loss_grad(out.dec.frames, batch.mel, w.rec, d_frames);
  if (w.spk != 0.0) {
    Tensor d_logits = ce.d_logits;
    for (double& v : d_logits.storage()) v *= w.spk;
    const Tensor d_pooled = disc_backward(m.disc, nullptr, out.disc, d_logits);
    mean_over_time_backward(d_pooled, shape, d_frames);
  }
  Tensor d_states = decode_backward(m.gen, cd, out.dec, d_frames, m.log_floor);
  Tensor d_style(out.style.shape());
  if (w.style != 0.0) {
    for (double& v : st.d_audio.storage()) v *= w.style;
    for (double& v : st.d_text.storage()) v *= w.style;
    audio_summary_backward(m.gen, out.summary, st.d_audio, shape, d_states);
    d_style = normalize_rows_backward(out.style, st.d_text);
  }
  const Tensor d_inputs = rollout_backward(m.gen, m.ablation, out.traj, out.style, d_states, d_style);
  encode_backward(m.gen, cd, out.enc, d_inputs, false);
  auto& sw = m.gen.entry("style.W");
  affine_backward(batch.frozen, sw.value, d_style, sw.grad, m.gen.grad("style.b"), nullptr);
  return out;
}

double discriminator_loss(Model& m, const Batch& batch, bool with_grad) {
  const Tensor pooled = mean_over_time(batch.mel, batch.shape);
  const DiscTrace tr = disc_forward(m.disc, pooled);
  const CrossEntropyResult ce = cross_entropy(tr.logits, batch.classes);
  if (!std::isfinite(ce.value)) throw NonFiniteError("non-finite discriminator loss");
  if (with_grad) disc_backward(m.disc, &m.disc, tr, ce.d_logits);
  return ce.value;
}

Conversion convert_mel(const Model& m, const Tensor& mel, const std::string& prompt) {
  if (mel.rank() != 2 || mel.cols() != m.dims.n_mels) {
    throw InvalidArgument("mel has shape " + shape_string(mel.shape()) + ", model expects " +
                          std::to_string(m.dims.n_mels) + " mel bands");
  }
  const SeqShape shape{mel.rows(), 1};
  const CodecDims cd = m.dims.codec();
  const auto s = m.style_vector(prompt);
  const Tensor style({1, s.size()}, s);
  const StackTrace enc = encode_forward(m.gen, cd, mel, shape);
  Conversion c;
  c.traj = rollout(m.gen, m.ablation, enc.head_out, style, shape);
  c.mel = decode_forward(m.gen, cd, c.traj.states, shape, m.log_floor).frames;
  return c;
}

}  // namespace lssvc

namespace lssvc {

GradCheckReport model_grad_check(const ModelGradCheckOptions& opts) {
  ModelDims dims;
  dims.n_mels = 8;
  dims.hidden = 8;
  dims.latent = 8;
  dims.style = 4;
  dims.disc_hidden = 8;
  Model m = init_model(dims, opts.ablation, opts.seed, std::log(1e-5));
  Rng rng(opts.seed ^ 0x9c4e5d1bULL);
  std::vector<Tensor> mels;
  std::vector<const Tensor*> ptrs;
  std::vector<std::string> prompts;
  std::vector<int> classes;
  const char* words[2][3] = {{"low-pitched", "slow", "clear"}, {"high-pitched", "fast", "whispered"}};
  for (std::size_t b = 0; b < opts.batch; ++b) {
    Tensor x({opts.steps, dims.n_mels});
    for (double& v : x.storage()) v = rng.uniform(-1.0, 1.0);
    mels.push_back(std::move(x));
    const auto& w = words[b % 2];
    prompts.push_back(std::string("a ") + w[0] + " " + w[1] + " " + w[2] + " voice");
    classes.push_back(static_cast<int>(b % 2 ? 7 : 0));
  }
  for (const Tensor& x : mels) ptrs.push_back(&x);
  const Batch batch = make_batch(m, ptrs, prompts, classes);
  const LossConfig cfg;
  const LossFn fn = [&](ParamStore&, bool with_grad) { return forward(m, batch, cfg, with_grad).loss.total; };
  return grad_check_report(fn, m.gen, opts.h);
}

}  // namespace lssvc
