#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "lssvc/audio.hpp"
#include "lssvc/error.hpp"
#include "lssvc/eval.hpp"
#include "lssvc/model.hpp"
#include "lssvc/synth_data.hpp"
#include "lssvc/training.hpp"

namespace lssvc::cli {

// Everything structured a subcommand may need. Every section and key is
// optional; unknown keys are rejected.
//
//   {"features": {...FeatureConfig}, "dims": {...ModelDims},
//    "training": {...TrainingConfig}, "corpus": {...CorpusOptions},
//    "eval": {"seed", "gl_iters", "f0_margin_hz", "rate_margin", "hnr_margin"}}
struct CliConfig {
  FeatureConfig features;
  ModelDims dims;
  TrainingConfig training;
  CorpusOptions corpus;
  EvalOptions eval;
};

class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

CliConfig parse_config(std::string_view json_text);
CliConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const CliConfig& cfg);

enum ExitCode : int { kOk = 0, kUsage = 1, kFailure = 2 };

// Runs one subcommand: gen-data, train, convert, eval, gradcheck, ablate.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lssvc::cli
