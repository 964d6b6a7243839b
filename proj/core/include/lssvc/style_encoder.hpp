#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lssvc/numerics.hpp"

namespace lssvc {

inline constexpr std::size_t kFrozenDim = 256;

struct StylePrompt {
  std::string text;
};

// Lowercased alphanumeric runs. Throws InvalidArgument when nothing remains.
std::vector<std::string> tokenize(const StylePrompt& prompt);

std::uint64_t fnv1a64(std::string_view bytes);

// Frozen text encoder: any callable from prompt to a unit vector of size
// kFrozenDim. Parameters behind it are never trained.
class FrozenTextEncoder {
 public:
  virtual ~FrozenTextEncoder() = default;
  virtual std::vector<double> embed(const StylePrompt& prompt) const = 0;
  virtual std::size_t dim() const { return kFrozenDim; }
};

// Hashed-Gaussian bag of tokens: every token indexes a pseudo-random Gaussian
// vector via FNV-1a(token) ^ seed; vectors are mean-pooled and L2-normalized.
class HashedGaussianEncoder final : public FrozenTextEncoder {
 public:
  explicit HashedGaussianEncoder(std::uint64_t seed = 0) : seed_(seed) {}
  std::vector<double> embed(const StylePrompt& prompt) const override;
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
};

std::vector<double> embed_frozen(const StylePrompt& prompt, std::uint64_t seed);

// Trainable affine map from the frozen vector to S: W is d_s x d_lm.
std::vector<double> project_style(std::span<const double> frozen, const Tensor& weight,
                                  const Tensor& bias);

}  // namespace lssvc
