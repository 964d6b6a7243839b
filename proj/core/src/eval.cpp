#include "lssvc/eval.hpp"

#include <cmath>
#include <numeric>

#include <json.hpp>

#include "lssvc/error.hpp"

namespace lssvc {

using json = nlohmann::json;

double time_consistency(const Tensor& states) {
  if (states.rank() != 2 || states.rows() < 2)
    throw InvalidArgument("time_consistency needs at least two states, got " + shape_string(states.shape()));
  const std::size_t steps = states.rows(), d = states.cols();
  double total = 0.0;
  for (std::size_t t = 0; t + 1 < steps; ++t) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double delta = states(t + 1, j) - states(t, j);
      s += delta * delta;
    }
    total += s;
  }
  return total / static_cast<double>(steps - 1);
}

double time_consistency(const LatentTrajectory& traj) {
  double s = 0.0;
  for (std::size_t b = 0; b < traj.shape.batch; ++b) s += time_consistency(traj.item_states(b));
  return s / static_cast<double>(traj.shape.batch);
}

namespace {

double summary_cosine(const Model& m, const Example& ex, const std::string& prompt) {
  const Conversion c = convert_mel(m, ex.mel, prompt);
  const std::vector<double> audio = audio_summary(c.traj.states, m.gen);
  const auto s = m.style_vector(prompt);
  const Tensor text = normalize_rows(Tensor({1, s.size()}, s));
  double dot = 0.0;
  for (std::size_t j = 0; j < audio.size(); ++j) dot += audio[j] * text[j];
  return dot;
}

// Sattolo's algorithm: a uniformly random cyclic permutation, hence a
// derangement for n >= 2.
std::vector<std::size_t> derangement(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i - 1)]);
  return p;
}

StyleAttrs flip(StyleAttrs a, Axis axis) {
  switch (axis) {
    case Axis::Pitch: a.pitch = a.pitch == PitchClass::High ? PitchClass::Low : PitchClass::High; break;
    case Axis::Rate: a.rate = a.rate == RateClass::Fast ? RateClass::Slow : RateClass::Fast; break;
    case Axis::Phonation:
      a.phonation = a.phonation == Phonation::Clear ? Phonation::Whispered : Phonation::Clear;
      break;
  }
  return a;
}

struct OracleValue {
  double value = 0.0;
  bool valid = true;
};

OracleValue measure(const Waveform& w, Axis axis) {
  switch (axis) {
    case Axis::Pitch: {
      const auto f0 = estimate_f0(w);
      return f0 ? OracleValue{*f0, true} : OracleValue{0.0, false};
    }
    case Axis::Rate: return {estimate_rate(w), true};
    case Axis::Phonation: return {estimate_hnr(w), true};
  }
  return {};
}

// +1 when reaching the target means the oracle value should rise.
double direction(const StyleAttrs& target, Axis axis) {
  switch (axis) {
    case Axis::Pitch: return target.pitch == PitchClass::High ? 1.0 : -1.0;
    case Axis::Rate: return target.rate == RateClass::Fast ? 1.0 : -1.0;
    case Axis::Phonation: return target.phonation == Phonation::Clear ? 1.0 : -1.0;
  }
  return 1.0;
}

double margin(const TransferMargins& m, Axis axis) {
  switch (axis) {
    case Axis::Pitch: return m.f0_hz;
    case Axis::Rate: return m.rate;
    case Axis::Phonation: return m.hnr;
  }
  return 0.0;
}

json case_json(const CaseRecord& c) {
  return {{"axis", c.axis},         {"source_class", c.source_class}, {"target_class", c.target_class},
          {"prompt", c.prompt},     {"before", c.before},             {"after", c.after},
          {"success", c.success},   {"note", c.note},                 {"time_consistency", c.time_consistency}};
}

json report_json(const EvalReport& r) {
  json cases = json::array();
  for (const auto& c : r.cases) cases.push_back(case_json(c));
  return {{"gsc_matched", r.gsc_matched},
          {"gsc_shuffled", r.gsc_shuffled},
          {"transfer_success",
           {{"pitch", r.transfer_success.pitch},
            {"rate", r.transfer_success.rate},
            {"phonation", r.transfer_success.phonation}}},
          {"time_consistency", r.time_consistency},
          {"cases", cases}};
}

}  // namespace

std::string to_string(Axis a) {
  switch (a) {
    case Axis::Pitch: return "pitch";
    case Axis::Rate: return "rate";
    case Axis::Phonation: return "phonation";
  }
  return "?";
}

double gsc(const Checkpoint& ckpt, const std::vector<Example>& eval_set, Pairing pairing, std::uint64_t seed) {
  if (eval_set.empty()) throw InvalidArgument("gsc: eval split is empty");
  std::vector<std::size_t> prompt_of(eval_set.size());
  std::iota(prompt_of.begin(), prompt_of.end(), std::size_t{0});
  if (pairing == Pairing::Shuffled) prompt_of = derangement(eval_set.size(), seed);
  double s = 0.0;
  for (std::size_t i = 0; i < eval_set.size(); ++i)
    s += summary_cosine(ckpt.model, eval_set[i], eval_set[prompt_of[i]].prompt);
  return s / static_cast<double>(eval_set.size());
}

TransferRates style_transfer_success(const Checkpoint& ckpt, const std::vector<Example>& eval_set,
                                     const EvalOptions& opts, std::vector<CaseRecord>* cases) {
  if (eval_set.empty()) throw InvalidArgument("style_transfer_success: eval split is empty");
  const Axis axes[3] = {Axis::Pitch, Axis::Rate, Axis::Phonation};
  int successes[3] = {0, 0, 0};
  for (std::size_t i = 0; i < eval_set.size(); ++i) {
    const Example& ex = eval_set[i];
    const Waveform reference = griffin_lim(MelSpectrogram{ex.mel, ckpt.features}, opts.gl_iters);
    for (int a = 0; a < 3; ++a) {
      const Axis axis = axes[a];
      const StyleAttrs target = flip(ex.attrs, axis);
      CaseRecord rec;
      rec.axis = to_string(axis);
      rec.source_class = ex.class_index;
      rec.target_class = target.class_index();
      rec.prompt = prompt_for(target, static_cast<int>(i % kNumPromptTemplates));
      LatentTrajectory traj;
      const Waveform out = convert(ex.wave, rec.prompt, ckpt, opts.gl_iters, &traj);
      rec.time_consistency = time_consistency(traj);
      const OracleValue before = measure(reference, axis);
      const OracleValue after = measure(out, axis);
      rec.before = before.value;
      rec.after = after.value;
      if (!before.valid || !after.valid) {
        rec.note = !after.valid ? "unvoiced output" : "unvoiced reference";
      } else {
        rec.success = direction(target, axis) * (after.value - before.value) >= margin(opts.margins, axis);
      }
      successes[a] += rec.success;
      if (cases) cases->push_back(std::move(rec));
    }
  }
  const double n = static_cast<double>(eval_set.size());
  return {successes[0] / n, successes[1] / n, successes[2] / n};
}

EvalReport evaluate(const Checkpoint& ckpt, const std::vector<Example>& eval_set, const EvalOptions& opts) {
  EvalReport r;
  r.gsc_matched = gsc(ckpt, eval_set, Pairing::Matched, opts.seed);
  r.gsc_shuffled = gsc(ckpt, eval_set, Pairing::Shuffled, opts.seed);
  r.transfer_success = style_transfer_success(ckpt, eval_set, opts, &r.cases);
  double tc = 0.0;
  for (const auto& c : r.cases) tc += c.time_consistency;
  r.time_consistency = r.cases.empty() ? 0.0 : tc / static_cast<double>(r.cases.size());
  return r;
}

std::string EvalReport::to_json() const { return report_json(*this).dump(2); }

std::string AblationReport::to_json() const {
  return json{{"variant", variant}, {"full", report_json(full)}, {"ablated", report_json(ablated)}}.dump(2);
}

AblationReport run_ablation(Ablation variant, const TrainingConfig& cfg, const ModelDims& dims,
                            const FeatureConfig& features, const std::vector<Example>& train_set,
                            const std::vector<Example>& eval_set, const EvalOptions& opts,
                            const EvalReport* full_report) {
  if (variant == Ablation::None) throw InvalidArgument("run_ablation: variant must differ from the full model");
  AblationReport rep;
  rep.variant = std::string(ablation_name(variant));
  TrainingConfig full_cfg = cfg;
  full_cfg.ablation = Ablation::None;
  if (full_report) {
    rep.full = *full_report;
  } else {
    rep.full = evaluate(train(full_cfg, dims, features, train_set), eval_set, opts);
  }
  TrainingConfig var_cfg = full_cfg;
  var_cfg.ablation = variant;
  rep.ablated = evaluate(train(var_cfg, dims, features, train_set), eval_set, opts);
  return rep;
}

}  // namespace lssvc
