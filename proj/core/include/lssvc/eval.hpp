#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lssvc/checkpoint.hpp"
#include "lssvc/ssm.hpp"
#include "lssvc/training.hpp"

namespace lssvc {

// Mean over t of |z(t+1) - z(t)|^2 for a T x d state matrix (T >= 2).
double time_consistency(const Tensor& states);
// Average of the per-item values of a batched trajectory.
double time_consistency(const LatentTrajectory& traj);

enum class Pairing { Matched, Shuffled };

// Mean cosine between the audio summary of each conversion's trajectory and
// the normalized S of the prompt it was converted with. Shuffled pairing uses
// a seeded derangement of the eval prompts.
double gsc(const Checkpoint& ckpt, const std::vector<Example>& eval_set, Pairing pairing,
           std::uint64_t seed = 1);

struct TransferRates {
  double pitch = 0.0;
  double rate = 0.0;
  double phonation = 0.0;
  double mean() const { return (pitch + rate + phonation) / 3.0; }
};

enum class Axis { Pitch, Rate, Phonation };
std::string to_string(Axis a);

struct TransferMargins {
  double f0_hz = 30.0;
  double rate = 0.8;
  double hnr = 0.1;
};

struct CaseRecord {
  std::string axis;
  int source_class = 0;
  int target_class = 0;
  std::string prompt;
  double before = 0.0;  // oracle on the vocoded input
  double after = 0.0;   // oracle on the conversion
  bool success = false;
  std::string note;
  double time_consistency = 0.0;
};

struct EvalOptions {
  std::uint64_t seed = 1;
  int gl_iters = 64;
  TransferMargins margins;
};

// Converts every eval item with the prompt of the opposite class on one axis
// at a time and scores oracle movement toward the target. The baseline is the
// Griffin-Lim resynthesis of the item's own mel, so vocoder artifacts alone
// earn no credit.
TransferRates style_transfer_success(const Checkpoint& ckpt, const std::vector<Example>& eval_set,
                                     const EvalOptions& opts = {}, std::vector<CaseRecord>* cases = nullptr);

struct EvalReport {
  double gsc_matched = 0.0;
  double gsc_shuffled = 0.0;
  TransferRates transfer_success;
  double time_consistency = 0.0;  // mean over the transfer conversions
  std::vector<CaseRecord> cases;

  std::string to_json() const;
};

EvalReport evaluate(const Checkpoint& ckpt, const std::vector<Example>& eval_set, const EvalOptions& opts = {});

struct AblationReport {
  std::string variant;
  EvalReport full;
  EvalReport ablated;
  std::string to_json() const;
};

// Trains the full model and the variant under the same config and seed, then
// evaluates both. A pre-trained full checkpoint may be supplied.
AblationReport run_ablation(Ablation variant, const TrainingConfig& cfg, const ModelDims& dims,
                            const FeatureConfig& features, const std::vector<Example>& train_set,
                            const std::vector<Example>& eval_set, const EvalOptions& opts = {},
                            const EvalReport* full_report = nullptr);

}  // namespace lssvc
