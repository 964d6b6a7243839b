#include "lssvc_cli/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "lssvc/checkpoint.hpp"

namespace lssvc::cli {

using json = nlohmann::json;

namespace {

using Setter = std::function<void(const json&)>;

void apply_section(const json& j, const std::string& section, const std::map<std::string, Setter>& keys) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    const auto it = keys.find(key);
    if (it == keys.end()) throw ConfigError("unknown config key '" + section + "." + key + "'");
    try {
      it->second(value);
    } catch (const json::exception& e) {
      throw ConfigError("bad value for '" + section + "." + key + "': " + e.what());
    }
  }
}

template <typename T>
Setter set(T& field) {
  return [&field](const json& v) { field = v.get<T>(); };
}

// Counts are validated as non-negative integers before narrowing.
Setter set_count(std::size_t& field) {
  return [&field](const json& v) {
    if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError("expected a non-negative integer");
    field = v.get<std::size_t>();
  };
}

}  // namespace

CliConfig parse_config(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  CliConfig c;
  std::size_t dims_mels = 0;
  bool dims_mels_set = false;
  std::string ablation;
  apply_section(root, "<root>", {
    {"features", [&](const json& j) {
       FeatureConfig& f = c.features;
       apply_section(j, "features", {{"sample_rate", set(f.sample_rate)}, {"n_fft", set_count(f.n_fft)},
                                     {"win_length", set_count(f.win_length)}, {"hop_length", set_count(f.hop_length)},
                                     {"n_mels", set_count(f.n_mels)}, {"fmin", set(f.fmin)},
                                     {"fmax", set(f.fmax)}, {"log_floor", set(f.log_floor)}});
     }},
    {"dims", [&](const json& j) {
       ModelDims& d = c.dims;
       apply_section(j, "dims", {{"n_mels", [&](const json& v) { dims_mels = v.get<std::size_t>(); dims_mels_set = true; }},
                                 {"hidden", set_count(d.hidden)}, {"layers", set_count(d.layers)},
                                 {"latent", set_count(d.latent)}, {"style", set_count(d.style)},
                                 {"classes", set_count(d.classes)}, {"disc_hidden", set_count(d.disc_hidden)}});
     }},
    {"training", [&](const json& j) {
       TrainingConfig& t = c.training;
       apply_section(j, "training", {{"lr", set(t.lr)}, {"steps", set(t.steps)}, {"batch_size", set_count(t.batch_size)},
                                     {"lambda_rec", set(t.weights.rec)}, {"lambda_style", set(t.weights.style)},
                                     {"lambda_spk", set(t.weights.spk)}, {"tau", set(t.tau)}, {"seed", set(t.seed)},
                                     {"deterministic", set(t.deterministic)},
                                     {"disc_update_every", set(t.disc_update_every)}, {"ablation", set(ablation)},
                                     {"crop_frames", set_count(t.crop_frames)}, {"log_every", set(t.log_every)},
                                     {"check_corpus", set(t.check_corpus)}});
     }},
    {"corpus", [&](const json& j) {
       CorpusOptions& o = c.corpus;
       apply_section(j, "corpus", {{"n_per_class", set(o.n_per_class)}, {"seed", set(o.seed)},
                                   {"duration_s", set(o.duration_s)}, {"sample_rate", set(o.sample_rate)}});
     }},
    {"eval", [&](const json& j) {
       EvalOptions& e = c.eval;
       apply_section(j, "eval", {{"seed", set(e.seed)}, {"gl_iters", set(e.gl_iters)},
                                 {"f0_margin_hz", set(e.margins.f0_hz)}, {"rate_margin", set(e.margins.rate)},
                                 {"hnr_margin", set(e.margins.hnr)}});
     }},
  });
  if (!ablation.empty()) {
    try {
      c.training.ablation = parse_ablation(ablation);
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
  }
  c.dims.n_mels = c.features.n_mels;
  if (dims_mels_set && dims_mels != c.features.n_mels)
    throw ConfigError("dims.n_mels must equal features.n_mels");
  try {
    c.features.validate();
    c.dims.validate();
    c.training.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  if (c.corpus.n_per_class < 2) throw ConfigError("corpus.n_per_class must be >= 2");
  if (!(c.corpus.duration_s > 0.0)) throw ConfigError("corpus.duration_s must be > 0");
  if (c.corpus.sample_rate != c.features.sample_rate)
    throw ConfigError("corpus.sample_rate must equal features.sample_rate");
  if (c.eval.gl_iters < 1) throw ConfigError("eval.gl_iters must be >= 1");
  return c;
}

CliConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const CliConfig& c) {
  const FeatureConfig& f = c.features;
  const ModelDims& d = c.dims;
  const CorpusOptions& o = c.corpus;
  const EvalOptions& e = c.eval;
  const json j = {
      {"features",
       {{"sample_rate", f.sample_rate}, {"n_fft", f.n_fft}, {"win_length", f.win_length},
        {"hop_length", f.hop_length}, {"n_mels", f.n_mels}, {"fmin", f.fmin}, {"fmax", f.fmax},
        {"log_floor", f.log_floor}}},
      {"dims",
       {{"n_mels", d.n_mels}, {"hidden", d.hidden}, {"layers", d.layers}, {"latent", d.latent},
        {"style", d.style}, {"classes", d.classes}, {"disc_hidden", d.disc_hidden}}},
      {"training", json::parse(training_config_json(c.training))},
      {"corpus",
       {{"n_per_class", o.n_per_class}, {"seed", o.seed}, {"duration_s", o.duration_s},
        {"sample_rate", o.sample_rate}}},
      {"eval",
       {{"seed", e.seed}, {"gl_iters", e.gl_iters}, {"f0_margin_hz", e.margins.f0_hz},
        {"rate_margin", e.margins.rate}, {"hnr_margin", e.margins.hnr}}}};
  return j.dump(2);
}

namespace {

struct Flags {
  std::string config, corpus, out, ckpt, in, prompt, variant, report;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool deterministic = false;
};

CliConfig resolve_config(const Flags& fl) {
  CliConfig c = fl.config.empty() ? parse_config("{}") : load_config(fl.config);
  if (fl.seed_set) {
    c.training.seed = fl.seed;
    c.corpus.seed = fl.seed;
    c.eval.seed = fl.seed;
  }
  if (fl.deterministic) c.training.deterministic = true;
  return c;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path);
  f << text << '\n';
  if (!f) throw IoError("write failed: " + path);
}

void print_eval(std::ostream& out, const EvalReport& r) {
  out << std::fixed << std::setprecision(4) << "gsc matched " << r.gsc_matched << ", shuffled " << r.gsc_shuffled
      << "\ntransfer success: pitch " << r.transfer_success.pitch << ", rate " << r.transfer_success.rate
      << ", phonation " << r.transfer_success.phonation << "\ntime consistency " << r.time_consistency << '\n';
}

TrainLogger stream_logger(std::ostream& out) {
  return [&out](const TrainLogEntry& e) {
    out << "step " << e.step << std::fixed << std::setprecision(5) << "  rec " << e.loss.rec << "  style "
        << e.loss.style << "  spk " << e.loss.spk << "  total " << e.loss.total << "  disc " << e.disc_loss
        << "  |A| " << e.a_norm << std::defaultfloat << '\n';
    out.flush();
  };
}

CorpusManifest corpus_manifest(const std::string& dir) {
  return load_manifest(std::filesystem::path(dir) / "manifest.json");
}

int run_gen_data(const Flags& fl, std::ostream& out) {
  const CliConfig c = resolve_config(fl);
  const CorpusManifest m = gen_corpus(c.corpus, fl.out);
  out << "wrote " << m.entries.size() << " utterances and manifest.json to " << fl.out << '\n';
  return kOk;
}

int run_train(const Flags& fl, std::ostream& out) {
  const CliConfig c = resolve_config(fl);
  const Checkpoint ck = train(c.training, c.dims, c.features, corpus_manifest(fl.corpus), stream_logger(out));
  save_checkpoint(ck, fl.out);
  out << "saved checkpoint to " << fl.out << '\n';
  return kOk;
}

int run_convert(const Flags& fl, std::ostream& out) {
  const CliConfig c = resolve_config(fl);
  const Checkpoint ck = load_checkpoint(fl.ckpt);
  const Waveform w = load_wav(fl.in);
  const Waveform y = convert(w, fl.prompt, ck, c.eval.gl_iters);
  const std::size_t clipped = save_wav(y, fl.out);
  out << "wrote " << fl.out << " (" << y.samples.size() << " samples";
  if (clipped) out << ", " << clipped << " clipped";
  out << ")\n";
  return kOk;
}

int run_eval(const Flags& fl, std::ostream& out) {
  const CliConfig c = resolve_config(fl);
  const Checkpoint ck = load_checkpoint(fl.ckpt);
  const auto eval_set = load_examples(corpus_manifest(fl.corpus), "eval", ck.features);
  const EvalReport r = evaluate(ck, eval_set, c.eval);
  print_eval(out, r);
  if (!fl.report.empty()) write_text(fl.report, r.to_json());
  return kOk;
}

int run_gradcheck(const Flags& fl, std::ostream& out) {
  ModelGradCheckOptions o;
  if (fl.seed_set) o.seed = fl.seed;
  const GradCheckReport r = model_grad_check(o);
  const bool pass = r.max_rel_error < 1e-4;
  out << "max relative error " << std::scientific << std::setprecision(3) << r.max_rel_error << " at "
      << r.worst_param << "[" << r.worst_index << "] over " << r.coordinates << " coordinates\n"
      << (pass ? "PASS" : "FAIL") << " (tolerance 1e-4)\n"
      << std::defaultfloat;
  return pass ? kOk : kFailure;
}

int run_ablate(const Flags& fl, std::ostream& out) {
  const CliConfig c = resolve_config(fl);
  const Ablation variant = parse_ablation(fl.variant);
  const CorpusManifest m = corpus_manifest(fl.corpus);
  const auto train_set = load_examples(m, "train", c.features);
  const auto eval_set = load_examples(m, "eval", c.features);
  const AblationReport r = run_ablation(variant, c.training, c.dims, c.features, train_set, eval_set, c.eval);
  out << "full model:\n";
  print_eval(out, r.full);
  out << fl.variant << ":\n";
  print_eval(out, r.ablated);
  if (!fl.report.empty()) write_text(fl.report, r.to_json());
  return kOk;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Text-driven voice conversion with a gated latent state-space recurrence", "lssvc"};
  app.require_subcommand(1, 1);
  Flags fl;

  auto add_config = [&](CLI::App* s) { s->add_option("--config", fl.config, "JSON config file")->check(CLI::ExistingFile); };
  auto add_seed = [&](CLI::App* s) {
    s->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& v) { fl.seed = v; fl.seed_set = true; },
                                          "Seed override");
  };

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic corpus and manifest");
  add_config(gen);
  gen->add_option("--out", fl.out, "Output directory")->required();
  add_seed(gen);

  auto* tr = app.add_subcommand("train", "Train a model and write a checkpoint");
  add_config(tr);
  tr->add_option("--corpus", fl.corpus, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--out", fl.out, "Checkpoint path")->required();
  add_seed(tr);
  tr->add_flag("--deterministic", fl.deterministic, "Deterministic mode");

  auto* cv = app.add_subcommand("convert", "Convert a WAV under a text prompt");
  add_config(cv);
  cv->add_option("--ckpt", fl.ckpt, "Checkpoint path")->required()->check(CLI::ExistingFile);
  cv->add_option("--in", fl.in, "Input WAV")->required()->check(CLI::ExistingFile);
  cv->add_option("--prompt", fl.prompt, "Style prompt")->required();
  cv->add_option("--out", fl.out, "Output WAV")->required();
  add_seed(cv);
  cv->add_flag("--deterministic", fl.deterministic, "Deterministic mode");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the corpus eval split");
  add_config(ev);
  ev->add_option("--ckpt", fl.ckpt, "Checkpoint path")->required()->check(CLI::ExistingFile);
  ev->add_option("--corpus", fl.corpus, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--report", fl.report, "Write the JSON report here");
  add_seed(ev);
  ev->add_flag("--deterministic", fl.deterministic, "Deterministic mode");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the full model gradient");
  add_seed(gc);

  auto* ab = app.add_subcommand("ablate", "Train and compare the full model against an ablation");
  add_config(ab);
  ab->add_option("--corpus", fl.corpus, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  ab->add_option("--variant", fl.variant, "Ablation variant")
      ->required()
      ->check(CLI::IsMember({"no_gating", "concat_fusion", "no_A"}));
  ab->add_option("--report", fl.report, "Write the JSON report here");
  add_seed(ab);
  ab->add_flag("--deterministic", fl.deterministic, "Deterministic mode");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  try {
    if (gen->parsed()) return run_gen_data(fl, out);
    if (tr->parsed()) return run_train(fl, out);
    if (cv->parsed()) return run_convert(fl, out);
    if (ev->parsed()) return run_eval(fl, out);
    if (gc->parsed()) return run_gradcheck(fl, out);
    if (ab->parsed()) return run_ablate(fl, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  err << app.help();
  return kUsage;
}

}  // namespace lssvc::cli
