#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "lssvc_cli/cli.hpp"

using namespace lssvc;
using namespace lssvc::cli;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "lssvc");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("lssvc_cli_test_" + name);
}

std::string write_config(const std::string& name, const std::string& text) {
  const auto p = temp_path(name);
  std::ofstream(p) << text;
  return p.string();
}

}  // namespace

TEST_CASE("empty config yields defaults") {
  const CliConfig c = parse_config("{}");
  CHECK(c.features.n_mels == 80);
  CHECK(c.dims.n_mels == 80);
  CHECK(c.training.steps == 20000);
  CHECK(c.training.lr == 1e-4);
  CHECK(c.corpus.n_per_class == 50);
  CHECK(c.eval.margins.f0_hz == 30.0);
}

TEST_CASE("config values are applied") {
  const CliConfig c = parse_config(R"({
    "features": {"n_mels": 40},
    "dims": {"hidden": 16, "latent": 8},
    "training": {"lr": 0.001, "steps": 10, "ablation": "no_A", "lambda_style": 0.0},
    "corpus": {"n_per_class": 4, "duration_s": 1.0},
    "eval": {"gl_iters": 8, "rate_margin": 0.5}
  })");
  CHECK(c.features.n_mels == 40);
  CHECK(c.dims.n_mels == 40);
  CHECK(c.dims.hidden == 16);
  CHECK(c.training.lr == 0.001);
  CHECK(c.training.ablation == Ablation::NoA);
  CHECK(c.training.weights.style == 0.0);
  CHECK(c.corpus.n_per_class == 4);
  CHECK(c.eval.gl_iters == 8);
  CHECK(c.eval.margins.rate == 0.5);
  const CliConfig back = parse_config(config_to_json(c));
  CHECK(back.dims == c.dims);
  CHECK(back.training.ablation == Ablation::NoA);
  CHECK(back.eval.margins.rate == 0.5);
}

TEST_CASE("config errors are rejected") {
  CHECK_THROWS_AS(parse_config("{"), ConfigError);
  CHECK_THROWS_AS(parse_config("[]"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"extra": {}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"training": {"learning_rate": 1}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"training": {"lr": "fast"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"training": {"lr": -1}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"training": {"ablation": "none_of_them"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"dims": {"n_mels": 40}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"dims": {"hidden": -3}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"corpus": {"sample_rate": 8000}})"), ConfigError);
  try {
    parse_config(R"({"eval": {"margin": 1}})");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("eval.margin") != std::string::npos);
  }
}

TEST_CASE("usage errors exit with code 1") {
  CHECK(run({}).code == kUsage);
  CHECK(run({"frobnicate"}).code == kUsage);
  const Run r = run({"convert", "--prompt", "x"});
  CHECK(r.code == kUsage);
  CHECK_FALSE(r.err.empty());
  CHECK(run({"ablate", "--corpus", std::filesystem::temp_directory_path().string(), "--variant", "bogus"}).code ==
        kUsage);
}

TEST_CASE("help exits cleanly") {
  const Run r = run({"--help"});
  CHECK(r.code == kOk);
  CHECK(r.out.find("gen-data") != std::string::npos);
}

TEST_CASE("bad config file exits with code 1 and names the key") {
  const std::string cfg = write_config("bad.json", R"({"dims": {"bogus": 1}})");
  const Run r = run({"gen-data", "--config", cfg, "--out", temp_path("never").string()});
  CHECK(r.code == kUsage);
  CHECK(r.err.find("dims.bogus") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(temp_path("never")));
}

TEST_CASE("runtime failures exit with code 2") {
  const auto dir = temp_path("empty_corpus");
  std::filesystem::create_directories(dir);
  const Run r = run({"train", "--corpus", dir.string(), "--out", temp_path("x.lssvc").string()});
  CHECK(r.code == kFailure);
  CHECK(r.err.find("manifest") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("gradcheck subcommand passes") {
  const Run r = run({"gradcheck"});
  CHECK(r.code == kOk);
  CHECK(r.out.find("PASS") != std::string::npos);
}

TEST_CASE("gen-data, train, convert and eval run end to end on a tiny setup") {
  const auto dir = temp_path("e2e");
  std::filesystem::remove_all(dir);
  const std::string cfg = write_config("e2e.json", R"({
    "features": {"n_mels": 12},
    "dims": {"hidden": 8, "latent": 6, "style": 4, "disc_hidden": 8},
    "training": {"steps": 3, "batch_size": 4, "crop_frames": 16, "log_every": 1},
    "corpus": {"n_per_class": 5, "duration_s": 2.0},
    "eval": {"gl_iters": 2}
  })");
  const std::string corpus = (dir / "corpus").string(), ckpt = (dir / "m.lssvc").string();
  REQUIRE(run({"gen-data", "--config", cfg, "--out", corpus}).code == kOk);
  CHECK(std::filesystem::exists(dir / "corpus" / "manifest.json"));

  const Run t = run({"train", "--config", cfg, "--corpus", corpus, "--out", ckpt, "--deterministic"});
  INFO(t.err);
  REQUIRE(t.code == kOk);
  CHECK(t.out.find("step 2") != std::string::npos);

  std::string wav;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir / "corpus"))
    if (e.path().extension() == ".wav") wav = e.path().string();
  const std::string out_wav = (dir / "out.wav").string();
  const Run c = run({"convert", "--config", cfg, "--ckpt", ckpt, "--in", wav, "--prompt", "a whispered voice",
                     "--out", out_wav});
  INFO(c.err);
  CHECK(c.code == kOk);
  CHECK(std::filesystem::exists(out_wav));

  const std::string report = (dir / "report.json").string();
  const Run e = run({"eval", "--config", cfg, "--ckpt", ckpt, "--corpus", corpus, "--report", report});
  INFO(e.err);
  CHECK(e.code == kOk);
  CHECK(e.out.find("gsc matched") != std::string::npos);
  CHECK(std::filesystem::exists(report));
  std::filesystem::remove_all(dir);
}
