#include "lssvc/style_encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "lssvc/error.hpp"
#include "lssvc/rng.hpp"

namespace lssvc {

std::vector<std::string> tokenize(const StylePrompt& prompt) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : prompt.text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  if (tokens.empty()) throw InvalidArgument("style prompt has no tokens: \"" + prompt.text + "\"");
  return tokens;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<double> HashedGaussianEncoder::embed(const StylePrompt& prompt) const {
  auto tokens = tokenize(prompt);
  // Canonical order makes the pooled sum bit-identical under token permutation.
  std::sort(tokens.begin(), tokens.end());
  std::vector<double> pooled(kFrozenDim, 0.0);
  for (const auto& tok : tokens) {
    Rng rng(fnv1a64(tok) ^ seed_);
    for (double& v : pooled) v += rng.gaussian();
  }
  const double inv_n = 1.0 / static_cast<double>(tokens.size());
  double norm = 0.0;
  for (double& v : pooled) {
    v *= inv_n;
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (double& v : pooled) v /= norm;
  return pooled;
}

std::vector<double> embed_frozen(const StylePrompt& prompt, std::uint64_t seed) {
  return HashedGaussianEncoder(seed).embed(prompt);
}

std::vector<double> project_style(std::span<const double> frozen, const Tensor& weight,
                                  const Tensor& bias) {
  if (weight.rank() != 2 || weight.dim(1) != frozen.size() || bias.size() != weight.dim(0)) {
    throw InvalidArgument("project_style: frozen dim " + std::to_string(frozen.size()) +
                          " vs W " + shape_string(weight.shape()) + ", b " +
                          shape_string(bias.shape()));
  }
  const std::size_t ds = weight.dim(0);
  std::vector<double> s(ds);
  kernel::gemm_nt(1, ds, frozen.size(), frozen.data(), frozen.size(), weight.data(),
                  frozen.size(), s.data(), ds, false);
  for (std::size_t i = 0; i < ds; ++i) s[i] += bias[i];
  return s;
}

}  // namespace lssvc
