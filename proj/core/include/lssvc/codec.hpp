#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lssvc/numerics.hpp"
#include "lssvc/rng.hpp"

namespace lssvc {

// Sequences are stored time-major: row t*batch + b holds frame t of item b.
struct SeqShape {
  std::size_t steps = 0;
  std::size_t batch = 1;
  std::size_t rows() const { return steps * batch; }
};

// One GRU layer. W is 3h x in, U is 3h x h, b is 3h; row blocks are ordered
// (reset, update, candidate).
struct GruTrace {
  SeqShape shape;
  Tensor input;   // (T*B) x in
  Tensor h0;      // B x h
  Tensor output;  // (T*B) x h
  Tensor r, u, c, rh;
};

GruTrace gru_forward(const Tensor& w, const Tensor& u, const Tensor& b, const Tensor& x,
                     SeqShape shape, const Tensor* h0 = nullptr);

// Backpropagates d_output through the layer; accumulates into dw/du/db and
// returns d_input when need_dx is set (otherwise an empty tensor). When dh0
// is non-null it receives the gradient with respect to the initial state.
Tensor gru_backward(const Tensor& w, const Tensor& u, const GruTrace& trace, const Tensor& d_output,
                    Tensor& dw, Tensor& du, Tensor& db, bool need_dx, Tensor* dh0 = nullptr);

// Single-vector GRU step.
std::vector<double> gru_cell_step(const std::vector<double>& x, const std::vector<double>& hidden,
                                  const Tensor& w, const Tensor& u, const Tensor& b);

struct CodecDims {
  std::size_t n_mels = 80;
  std::size_t hidden = 64;
  std::size_t layers = 2;
  std::size_t latent = 32;
};

// Adds "enc.*" and "dec.*" parameters with uniform(-k, k), k = 1/sqrt(fan_in).
void init_codec_params(ParamStore& store, const CodecDims& dims, Rng& rng);

struct StackTrace {
  std::vector<GruTrace> layers;
  Tensor head_out;  // (T*B) x out, pre-clamp for the decoder
};

// Encoder: (T*B) x M frames -> (T*B) x d inputs.
StackTrace encode_forward(const ParamStore& p, const CodecDims& dims, const Tensor& mel, SeqShape shape);
// Returns d_mel only when requested.
Tensor encode_backward(ParamStore& p, const CodecDims& dims, const StackTrace& trace,
                       const Tensor& d_out, bool need_dx = false);

// Decoder: (T*B) x d states -> (T*B) x M frames, clamped below at floor.
struct DecodeResult {
  StackTrace trace;
  Tensor frames;
};
DecodeResult decode_forward(const ParamStore& p, const CodecDims& dims, const Tensor& states,
                            SeqShape shape, double floor);
Tensor decode_backward(ParamStore& p, const CodecDims& dims, const DecodeResult& fwd,
                       const Tensor& d_frames, double floor);

// Convenience single-utterance entry points (T x M in, T x d / T x M out).
Tensor encode(const Tensor& mel, const ParamStore& p, const CodecDims& dims);
Tensor decode(const Tensor& states, const ParamStore& p, const CodecDims& dims, double floor);

}  // namespace lssvc
