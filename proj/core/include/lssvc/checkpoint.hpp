#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "lssvc/audio.hpp"
#include "lssvc/error.hpp"
#include "lssvc/model.hpp"

namespace lssvc {

inline constexpr char kCheckpointMagic[9] = "LSSVC001";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Model model;
  FeatureConfig features;
  std::int64_t step = 0;
  std::string config_json = "{}";  // echo of the training configuration
};

class CheckpointError : public IoError {
 public:
  enum class Kind { BadMagic, VersionMismatch, Truncated, Malformed };
  CheckpointError(Kind kind, const std::string& what) : IoError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Layout: 8-byte magic, u32 version, u32 header length, JSON header
// {dims, step, config, tensors: [{name, shape, offset}]}, then float32
// little-endian payloads in header order. Parameters are kept
// float-representable during training, so the round trip is exact.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lssvc
