#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "lssvc/codec.hpp"
#include "lssvc/numerics.hpp"
#include "lssvc/rng.hpp"

namespace lssvc {

// Which fusion path drives the latent recurrence.
enum class Ablation {
  None,          // z' = A z + gamma(S, z) + b + u
  NoGating,      // z' = A z + b + u
  ConcatFusion,  // z' = A z + F [z; S] + f + b + u
  NoA,           // z' = gamma(S, z) + b + u
};

std::string_view ablation_name(Ablation a);
Ablation parse_ablation(std::string_view name);

inline bool has_transition(Ablation a) { return a != Ablation::NoA; }
inline bool has_gate(Ablation a) { return a == Ablation::None || a == Ablation::NoA; }
inline bool has_concat(Ablation a) { return a == Ablation::ConcatFusion; }

inline constexpr double kSpectralCap = 0.99;

struct SsmDims {
  std::size_t latent = 32;  // d; the gate width d_g equals d
  std::size_t style = 16;   // d_s
};

// Adds the "ssm.*" tensors used by `ablation`. A starts at 0.5 I plus small
// noise; gate and concat weights use uniform(-k, k), k = 1/sqrt(fan_in).
void init_ssm_params(ParamStore& store, const SsmDims& dims, Ablation ablation, Rng& rng);

struct GateOutput {
  std::vector<double> g;      // sigmoid(W_z z + W_s S + b_g), in (0, 1)
  std::vector<double> gamma;  // g * tanh(U_z z + U_s S), in (-1, 1)
};

GateOutput gate(std::span<const double> s, std::span<const double> z, const ParamStore& p);

// One recurrence step. Throws NonFiniteError naming `step` on NaN/Inf.
std::vector<double> ssm_step(std::span<const double> z_prev, std::span<const double> u_t,
                             std::span<const double> s, const ParamStore& p, Ablation ablation,
                             std::size_t step = 0);

// Latent states plus gate activations, time-major (row t*B + b).
struct LatentTrajectory {
  SeqShape shape;
  Tensor states;  // (T*B) x d
  Tensor gates;   // (T*B) x d_g; row block t=0 is unused (no recurrence)
  Tensor tanh_q;  // (T*B) x d_g
  Tensor style_w; // B x d_g: W_s S + b_g (or F_s S + f in concat mode)
  Tensor style_u; // B x d_g: U_s S

  // Rows for item b as a T x d tensor.
  Tensor item_states(std::size_t b) const;
  Tensor item_gates(std::size_t b) const;
};

// z(1) = u(1); z(t) = ssm_step(z(t-1), u(t), S) for t >= 2.
LatentTrajectory rollout(const ParamStore& p, Ablation ablation, const Tensor& inputs,
                         const Tensor& style, SeqShape shape);

// Backpropagation through time. Accumulates parameter gradients and returns
// d_inputs; d_style (B x d_s) is accumulated.
Tensor rollout_backward(ParamStore& p, Ablation ablation, const LatentTrajectory& traj,
                        const Tensor& style, const Tensor& d_states, Tensor& d_style);

// Rescales A so that its estimated spectral norm is at most 0.99. Returns
// the estimate before rescaling (0 when A is absent).
double constrain_A(ParamStore& p, int iters = 30);

}  // namespace lssvc
