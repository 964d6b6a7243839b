#include "lssvc/codec.hpp"

#include <algorithm>
#include <cmath>

#include "lssvc/error.hpp"

namespace lssvc {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_gru(const Tensor& w, const Tensor& u, const Tensor& b, std::size_t in) {
  if (u.rank() != 2 || u.dim(0) != 3 * u.dim(1)) {
    throw InvalidArgument("GRU U must be 3h x h, got " + shape_string(u.shape()));
  }
  const std::size_t h = u.dim(1);
  if (w.rank() != 2 || w.dim(0) != 3 * h || w.dim(1) != in) {
    throw InvalidArgument("GRU W must be " + std::to_string(3 * h) + "x" + std::to_string(in) +
                          ", got " + shape_string(w.shape()));
  }
  if (b.size() != 3 * h) throw InvalidArgument("GRU bias must have 3h entries");
}

std::string layer_name(const char* side, std::size_t i, const char* what) {
  return std::string(side) + ".gru" + std::to_string(i) + "." + what;
}

void fill_uniform(Tensor& t, double k, Rng& rng) {
  for (double& v : t.storage()) v = rng.uniform(-k, k);
}

}  // namespace

GruTrace gru_forward(const Tensor& w, const Tensor& u, const Tensor& b, const Tensor& x,
                     SeqShape shape, const Tensor* h0) {
  const std::size_t n = shape.rows();
  if (x.rows() != n) {
    throw InvalidArgument("GRU input has " + std::to_string(x.rows()) + " rows, expected " +
                          std::to_string(n));
  }
  const std::size_t in = x.cols();
  check_gru(w, u, b, in);
  const std::size_t h = u.dim(1), h3 = 3 * h, bsz = shape.batch;

  GruTrace tr;
  tr.shape = shape;
  tr.input = x;
  tr.h0 = h0 ? *h0 : Tensor({bsz, h});
  if (tr.h0.rows() != bsz || tr.h0.cols() != h) throw InvalidArgument("GRU initial state shape mismatch");
  tr.output = Tensor({n, h});
  tr.r = Tensor({n, h});
  tr.u = Tensor({n, h});
  tr.c = Tensor({n, h});
  tr.rh = Tensor({n, h});

  const Tensor wt = transpose(w);
  const Tensor ut = transpose(u);
  Tensor pre({n, h3});
  for (std::size_t i = 0; i < n; ++i) std::copy(b.data(), b.data() + h3, &pre(i, 0));
  kernel::gemm_nn(n, h3, in, x.data(), in, wt.data(), h3, pre.data(), h3, true);

  std::vector<double> ru(bsz * 2 * h), cp(bsz * h);
  for (std::size_t t = 0; t < shape.steps; ++t) {
    const double* hprev = t == 0 ? tr.h0.data() : tr.output.data() + (t - 1) * bsz * h;
    const std::size_t row0 = t * bsz;
    for (std::size_t bi = 0; bi < bsz; ++bi)
      std::copy(&pre(row0 + bi, 0), &pre(row0 + bi, 0) + 2 * h, ru.data() + bi * 2 * h);
    kernel::gemm_nn(bsz, 2 * h, h, hprev, h, ut.data(), h3, ru.data(), 2 * h, true);
    for (std::size_t bi = 0; bi < bsz; ++bi) {
      const std::size_t row = row0 + bi;
      for (std::size_t j = 0; j < h; ++j) {
        const double rv = sigmoid(ru[bi * 2 * h + j]);
        tr.r(row, j) = rv;
        tr.u(row, j) = sigmoid(ru[bi * 2 * h + h + j]);
        tr.rh(row, j) = rv * hprev[bi * h + j];
        cp[bi * h + j] = pre(row, 2 * h + j);
      }
    }
    kernel::gemm_nn(bsz, h, h, &tr.rh(row0, 0), h, ut.data() + 2 * h, h3, cp.data(), h, true);
    for (std::size_t bi = 0; bi < bsz; ++bi) {
      const std::size_t row = row0 + bi;
      for (std::size_t j = 0; j < h; ++j) {
        const double cv = std::tanh(cp[bi * h + j]);
        const double uv = tr.u(row, j);
        tr.c(row, j) = cv;
        tr.output(row, j) = (1.0 - uv) * hprev[bi * h + j] + uv * cv;
      }
    }
  }
  return tr;
}

Tensor gru_backward(const Tensor& w, const Tensor& u, const GruTrace& tr, const Tensor& d_output,
                    Tensor& dw, Tensor& du, Tensor& db, bool need_dx, Tensor* dh0) {
  const std::size_t n = tr.shape.rows(), bsz = tr.shape.batch;
  const std::size_t h = u.dim(1), h3 = 3 * h, in = tr.input.cols();
  Tensor da({n, h3});
  Tensor hprev_all({n, h});
  std::vector<double> carry(bsz * h, 0.0), drh(bsz * h);

  for (std::size_t t = tr.shape.steps; t-- > 0;) {
    const double* hprev = t == 0 ? tr.h0.data() : tr.output.data() + (t - 1) * bsz * h;
    const std::size_t row0 = t * bsz;
    std::copy(hprev, hprev + bsz * h, &hprev_all(row0, 0));
    for (std::size_t bi = 0; bi < bsz; ++bi) {
      const std::size_t row = row0 + bi;
      for (std::size_t j = 0; j < h; ++j) {
        const double dh = d_output(row, j) + carry[bi * h + j];
        const double uv = tr.u(row, j), cv = tr.c(row, j), hp = hprev[bi * h + j];
        da(row, h + j) = dh * (cv - hp) * uv * (1.0 - uv);
        da(row, 2 * h + j) = dh * uv * (1.0 - cv * cv);
        carry[bi * h + j] = dh * (1.0 - uv);
      }
    }
    kernel::gemm_nn(bsz, h, h, &da(row0, 2 * h), h3, u.data() + 2 * h * h, h, drh.data(), h, false);
    for (std::size_t bi = 0; bi < bsz; ++bi) {
      const std::size_t row = row0 + bi;
      for (std::size_t j = 0; j < h; ++j) {
        const double rv = tr.r(row, j);
        da(row, j) = drh[bi * h + j] * hprev[bi * h + j] * rv * (1.0 - rv);
        carry[bi * h + j] += drh[bi * h + j] * rv;
      }
    }
    kernel::gemm_nn(bsz, h, 2 * h, &da(row0, 0), h3, u.data(), h, carry.data(), h, true);
  }

  kernel::gemm_tn(h3, in, n, da.data(), h3, tr.input.data(), in, dw.data(), in);
  kernel::gemm_tn(2 * h, h, n, da.data(), h3, hprev_all.data(), h, du.data(), h);
  kernel::gemm_tn(h, h, n, da.data() + 2 * h, h3, tr.rh.data(), h, du.data() + 2 * h * h, h);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < h3; ++j) db[j] += da(i, j);
  if (dh0) *dh0 = Tensor({bsz, h}, carry);
  if (!need_dx) return {};
  Tensor dx({n, in});
  kernel::gemm_nn(n, in, h3, da.data(), h3, w.data(), in, dx.data(), in, false);
  return dx;
}

std::vector<double> gru_cell_step(const std::vector<double>& x, const std::vector<double>& hidden,
                                  const Tensor& w, const Tensor& u, const Tensor& b) {
  check_gru(w, u, b, x.size());
  if (hidden.size() != u.dim(1)) throw InvalidArgument("GRU hidden size mismatch");
  const Tensor xt({1, x.size()}, x);
  const Tensor h0({1, hidden.size()}, hidden);
  const GruTrace tr = gru_forward(w, u, b, xt, SeqShape{1, 1}, &h0);
  return tr.output.storage();
}

void init_codec_params(ParamStore& store, const CodecDims& d, Rng& rng) {
  const double kh = 1.0 / std::sqrt(static_cast<double>(d.hidden));
  auto add_stack = [&](const char* side, std::size_t in0) {
    for (std::size_t i = 0; i < d.layers; ++i) {
      const std::size_t in = i == 0 ? in0 : d.hidden;
      Tensor w({3 * d.hidden, in}), u({3 * d.hidden, d.hidden}), b({3 * d.hidden});
      fill_uniform(w, 1.0 / std::sqrt(static_cast<double>(in)), rng);
      fill_uniform(u, kh, rng);
      fill_uniform(b, kh, rng);
      store.add(layer_name(side, i, "W"), std::move(w));
      store.add(layer_name(side, i, "U"), std::move(u));
      store.add(layer_name(side, i, "b"), std::move(b));
    }
  };
  add_stack("enc", d.n_mels);
  Tensor ew({d.latent, d.hidden}), eb({d.latent});
  fill_uniform(ew, kh, rng);
  fill_uniform(eb, kh, rng);
  store.add("enc.head.W", std::move(ew));
  store.add("enc.head.b", std::move(eb));
  add_stack("dec", d.latent);
  Tensor dw({d.n_mels, d.hidden}), db({d.n_mels});
  fill_uniform(dw, kh, rng);
  fill_uniform(db, kh, rng);
  store.add("dec.head.W", std::move(dw));
  store.add("dec.head.b", std::move(db));
}

namespace {

StackTrace stack_forward(const ParamStore& p, const char* side, const CodecDims& d,
                         const Tensor& x, SeqShape shape) {
  StackTrace st;
  const Tensor* in = &x;
  for (std::size_t i = 0; i < d.layers; ++i) {
    st.layers.push_back(gru_forward(p.value(layer_name(side, i, "W")), p.value(layer_name(side, i, "U")),
                                    p.value(layer_name(side, i, "b")), *in, shape));
    in = &st.layers.back().output;
  }
  const std::string head = std::string(side) + ".head.";
  st.head_out = affine_forward(*in, p.value(head + "W"), p.value(head + "b"));
  return st;
}

Tensor stack_backward(ParamStore& p, const char* side, const CodecDims& d, const StackTrace& st,
                      const Tensor& d_head, bool need_dx) {
  const std::string head = std::string(side) + ".head.";
  Tensor dh;
  auto& hw = p.entry(head + "W");
  affine_backward(st.layers.back().output, hw.value, d_head, hw.grad, p.grad(head + "b"), &dh);
  for (std::size_t i = d.layers; i-- > 0;) {
    auto& w = p.entry(layer_name(side, i, "W"));
    auto& u = p.entry(layer_name(side, i, "U"));
    auto& b = p.entry(layer_name(side, i, "b"));
    const bool want = i > 0 || need_dx;
    dh = gru_backward(w.value, u.value, st.layers[i], dh, w.grad, u.grad, b.grad, want);
  }
  return dh;
}

}  // namespace

StackTrace encode_forward(const ParamStore& p, const CodecDims& dims, const Tensor& mel, SeqShape shape) {
  if (mel.cols() != dims.n_mels) {
    throw InvalidArgument("encoder expects " + std::to_string(dims.n_mels) + " mel bins, got " +
                          std::to_string(mel.cols()));
  }
  return stack_forward(p, "enc", dims, mel, shape);
}

Tensor encode_backward(ParamStore& p, const CodecDims& dims, const StackTrace& trace,
                       const Tensor& d_out, bool need_dx) {
  return stack_backward(p, "enc", dims, trace, d_out, need_dx);
}

DecodeResult decode_forward(const ParamStore& p, const CodecDims& dims, const Tensor& states,
                            SeqShape shape, double floor) {
  if (states.cols() != dims.latent) {
    throw InvalidArgument("decoder expects latent dim " + std::to_string(dims.latent) + ", got " +
                          std::to_string(states.cols()));
  }
  DecodeResult r;
  r.trace = stack_forward(p, "dec", dims, states, shape);
  r.frames = r.trace.head_out;
  for (double& v : r.frames.storage()) v = std::max(v, floor);
  return r;
}

Tensor decode_backward(ParamStore& p, const CodecDims& dims, const DecodeResult& fwd,
                       const Tensor& d_frames, double floor) {
  Tensor d_head = d_frames;
  const auto& pre = fwd.trace.head_out;
  for (std::size_t i = 0; i < d_head.size(); ++i)
    if (pre[i] < floor) d_head[i] = 0.0;
  return stack_backward(p, "dec", dims, fwd.trace, d_head, true);
}

Tensor encode(const Tensor& mel, const ParamStore& p, const CodecDims& dims) {
  return encode_forward(p, dims, mel, SeqShape{mel.rows(), 1}).head_out;
}

Tensor decode(const Tensor& states, const ParamStore& p, const CodecDims& dims, double floor) {
  return decode_forward(p, dims, states, SeqShape{states.rows(), 1}, floor).frames;
}

}  // namespace lssvc
