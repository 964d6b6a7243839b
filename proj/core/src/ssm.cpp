#include "lssvc/ssm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "lssvc/error.hpp"

namespace lssvc {

namespace {

// Gate values must stay strictly inside (0, 1). In double, 1/(1+e^-x) rounds
// to exactly 1 for x > ~37 and to 0 for x < ~-745, so clamp to the nearest
// representable interior values.
inline double sigmoid(double x) {
  const double g = 1.0 / (1.0 + std::exp(-x));
  return std::clamp(g, std::numeric_limits<double>::denorm_min(), std::nextafter(1.0, 0.0));
}

void fill_uniform(Tensor& t, double k, Rng& rng) {
  for (double& v : t.storage()) v = rng.uniform(-k, k);
}

// out[B x n] (+)= x[B x k] * W^T, W is n x k
void rows_times_wt(const Tensor& w, const double* x, std::size_t rows, double* out, bool acc) {
  kernel::gemm_nt(rows, w.dim(0), w.dim(1), x, w.dim(1), w.data(), w.dim(1), out, w.dim(0), acc);
}

void check_dims(const ParamStore& p, std::size_t d, std::size_t ds, Ablation a) {
  auto expect = [&](std::string_view name, std::size_t r, std::size_t c) {
    const Tensor& t = p.value(name);
    const bool ok = c == 0 ? t.size() == r : (t.rank() == 2 && t.dim(0) == r && t.dim(1) == c);
    if (!ok) {
      throw InvalidArgument(std::string(name) + " has shape " + shape_string(t.shape()) +
                            ", expected " + std::to_string(r) + (c ? "x" + std::to_string(c) : ""));
    }
  };
  expect("ssm.b", d, 0);
  if (has_transition(a)) expect("ssm.A", d, d);
  if (has_gate(a)) {
    expect("ssm.Wz", d, d);
    expect("ssm.Ws", d, ds);
    expect("ssm.bg", d, 0);
    expect("ssm.Uz", d, d);
    expect("ssm.Us", d, ds);
  }
  if (has_concat(a)) {
    expect("ssm.Fz", d, d);
    expect("ssm.Fs", d, ds);
    expect("ssm.fb", d, 0);
  }
}

}  // namespace

std::string_view ablation_name(Ablation a) {
  switch (a) {
    case Ablation::None: return "none";
    case Ablation::NoGating: return "no_gating";
    case Ablation::ConcatFusion: return "concat_fusion";
    case Ablation::NoA: return "no_A";
  }
  return "none";
}

Ablation parse_ablation(std::string_view name) {
  if (name == "none" || name.empty()) return Ablation::None;
  if (name == "no_gating") return Ablation::NoGating;
  if (name == "concat_fusion") return Ablation::ConcatFusion;
  if (name == "no_A") return Ablation::NoA;
  throw InvalidArgument("unknown ablation variant: " + std::string(name));
}

void init_ssm_params(ParamStore& store, const SsmDims& dims, Ablation a, Rng& rng) {
  const std::size_t d = dims.latent, ds = dims.style;
  const double kd = 1.0 / std::sqrt(static_cast<double>(d));
  const double ks = 1.0 / std::sqrt(static_cast<double>(ds));
  if (has_transition(a)) {
    Tensor A({d, d});
    fill_uniform(A, 0.1 * kd, rng);
    for (std::size_t i = 0; i < d; ++i) A(i, i) += 0.5;
    store.add("ssm.A", std::move(A));
  }
  store.add("ssm.b", Tensor({d}));
  if (has_gate(a)) {
    Tensor wz({d, d}), ws({d, ds}), bg({d}), uz({d, d}), us({d, ds});
    fill_uniform(wz, kd, rng);
    fill_uniform(ws, ks, rng);
    fill_uniform(bg, kd, rng);
    fill_uniform(uz, kd, rng);
    fill_uniform(us, ks, rng);
    store.add("ssm.Wz", std::move(wz));
    store.add("ssm.Ws", std::move(ws));
    store.add("ssm.bg", std::move(bg));
    store.add("ssm.Uz", std::move(uz));
    store.add("ssm.Us", std::move(us));
  }
  if (has_concat(a)) {
    Tensor fz({d, d}), fs({d, ds}), fb({d});
    fill_uniform(fz, 0.1 * kd, rng);
    fill_uniform(fs, ks, rng);
    store.add("ssm.Fz", std::move(fz));
    store.add("ssm.Fs", std::move(fs));
    store.add("ssm.fb", std::move(fb));
  }
}

GateOutput gate(std::span<const double> s, std::span<const double> z, const ParamStore& p) {
  const Tensor& wz = p.value("ssm.Wz");
  const std::size_t d = wz.dim(0);
  if (z.size() != d || s.size() != p.value("ssm.Ws").dim(1) || p.value("ssm.Uz").dim(0) != d ||
      p.value("ssm.Us").dim(1) != s.size()) {
    throw InvalidArgument("gate: z has " + std::to_string(z.size()) + " entries, S has " +
                          std::to_string(s.size()));
  }
  std::vector<double> a(d), q(d);
  rows_times_wt(wz, z.data(), 1, a.data(), false);
  rows_times_wt(p.value("ssm.Ws"), s.data(), 1, a.data(), true);
  rows_times_wt(p.value("ssm.Uz"), z.data(), 1, q.data(), false);
  rows_times_wt(p.value("ssm.Us"), s.data(), 1, q.data(), true);
  const Tensor& bg = p.value("ssm.bg");
  GateOutput out{std::vector<double>(d), std::vector<double>(d)};
  for (std::size_t i = 0; i < d; ++i) {
    out.g[i] = sigmoid(a[i] + bg[i]);
    out.gamma[i] = out.g[i] * std::tanh(q[i]);
  }
  return out;
}

std::vector<double> ssm_step(std::span<const double> z_prev, std::span<const double> u_t,
                             std::span<const double> s, const ParamStore& p, Ablation a,
                             std::size_t step) {
  const std::size_t d = p.value("ssm.b").size();
  if (z_prev.size() != d || u_t.size() != d) throw InvalidArgument("ssm_step: latent size mismatch");
  // Reuse the batched path with a two-frame sequence whose first frame is z_prev.
  Tensor inputs({2, d});
  for (std::size_t i = 0; i < d; ++i) {
    inputs(0, i) = z_prev[i];
    inputs(1, i) = u_t[i];
  }
  const std::size_t ds = s.size();
  const Tensor style({1, ds}, std::vector<double>(s.begin(), s.end()));
  LatentTrajectory tr;
  try {
    tr = rollout(p, a, inputs, style, SeqShape{2, 1});
  } catch (const NonFiniteError&) {
    throw NonFiniteError("non-finite latent state at step " + std::to_string(step));
  }
  return std::vector<double>(tr.states.row(1).begin(), tr.states.row(1).end());
}

Tensor LatentTrajectory::item_states(std::size_t b) const {
  Tensor out({shape.steps, states.cols()});
  for (std::size_t t = 0; t < shape.steps; ++t) {
    auto src = states.row(t * shape.batch + b);
    std::copy(src.begin(), src.end(), out.row(t).begin());
  }
  return out;
}

Tensor LatentTrajectory::item_gates(std::size_t b) const {
  if (gates.empty()) return {};
  Tensor out({shape.steps, gates.cols()});
  for (std::size_t t = 0; t < shape.steps; ++t) {
    auto src = gates.row(t * shape.batch + b);
    std::copy(src.begin(), src.end(), out.row(t).begin());
  }
  return out;
}

LatentTrajectory rollout(const ParamStore& p, Ablation a, const Tensor& inputs, const Tensor& style,
                         SeqShape shape) {
  if (shape.steps < 1) throw InvalidArgument("rollout: need T >= 1");
  const std::size_t d = p.value("ssm.b").size(), bsz = shape.batch, n = shape.rows();
  const std::size_t ds = style.cols();
  if (inputs.rows() != n || inputs.cols() != d) {
    throw InvalidArgument("rollout: inputs " + shape_string(inputs.shape()) + " do not match T*B=" +
                          std::to_string(n) + ", d=" + std::to_string(d));
  }
  if (style.rows() != bsz) throw InvalidArgument("rollout: style batch mismatch");
  check_dims(p, d, ds, a);

  LatentTrajectory tr;
  tr.shape = shape;
  tr.states = Tensor({n, d});
  std::copy(inputs.data(), inputs.data() + bsz * d, tr.states.data());
  const Tensor& b = p.value("ssm.b");
  if (has_gate(a)) {
    tr.gates = Tensor({n, d});
    tr.tanh_q = Tensor({n, d});
    tr.style_w = Tensor({bsz, d});
    tr.style_u = Tensor({bsz, d});
    rows_times_wt(p.value("ssm.Ws"), style.data(), bsz, tr.style_w.data(), false);
    rows_times_wt(p.value("ssm.Us"), style.data(), bsz, tr.style_u.data(), false);
    const Tensor& bg = p.value("ssm.bg");
    for (std::size_t i = 0; i < bsz; ++i)
      for (std::size_t j = 0; j < d; ++j) tr.style_w(i, j) += bg[j];
  } else if (has_concat(a)) {
    tr.style_w = Tensor({bsz, d});
    rows_times_wt(p.value("ssm.Fs"), style.data(), bsz, tr.style_w.data(), false);
    const Tensor& fb = p.value("ssm.fb");
    for (std::size_t i = 0; i < bsz; ++i)
      for (std::size_t j = 0; j < d; ++j) tr.style_w(i, j) += fb[j];
  }

  std::vector<double> pa(bsz * d), qa(bsz * d);
  for (std::size_t t = 1; t < shape.steps; ++t) {
    const double* zprev = tr.states.data() + (t - 1) * bsz * d;
    double* z = tr.states.data() + t * bsz * d;
    const double* u = inputs.data() + t * bsz * d;
    for (std::size_t i = 0; i < bsz * d; ++i) z[i] = u[i] + b[i % d];
    if (has_transition(a)) rows_times_wt(p.value("ssm.A"), zprev, bsz, z, true);
    if (has_gate(a)) {
      rows_times_wt(p.value("ssm.Wz"), zprev, bsz, pa.data(), false);
      rows_times_wt(p.value("ssm.Uz"), zprev, bsz, qa.data(), false);
      for (std::size_t i = 0; i < bsz; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
          const std::size_t k = i * d + j;
          const double g = sigmoid(pa[k] + tr.style_w(i, j));
          const double q = std::tanh(qa[k] + tr.style_u(i, j));
          tr.gates(t * bsz + i, j) = g;
          tr.tanh_q(t * bsz + i, j) = q;
          z[k] += g * q;
        }
      }
    }
    if (has_concat(a)) {
      rows_times_wt(p.value("ssm.Fz"), zprev, bsz, z, true);
      for (std::size_t i = 0; i < bsz; ++i)
        for (std::size_t j = 0; j < d; ++j) z[i * d + j] += tr.style_w(i, j);
    }
    for (std::size_t i = 0; i < bsz * d; ++i) {
      if (!std::isfinite(z[i])) {
        throw NonFiniteError("non-finite latent state at step " + std::to_string(t));
      }
    }
  }
  return tr;
}

Tensor rollout_backward(ParamStore& p, Ablation a, const LatentTrajectory& tr, const Tensor& style,
                        const Tensor& d_states, Tensor& d_style) {
  const std::size_t d = tr.states.cols(), bsz = tr.shape.batch, n = tr.shape.rows();
  const std::size_t ds = style.cols();
  Tensor g = d_states;  // running dL/dz(t), completed from t = T-1 downward
  Tensor dp, dq;
  if (has_gate(a)) {
    dp = Tensor({n, d});
    dq = Tensor({n, d});
  }
  for (std::size_t t = tr.shape.steps; t-- > 1;) {
    const double* dz = g.data() + t * bsz * d;
    double* dprev = g.data() + (t - 1) * bsz * d;
    if (has_transition(a)) {
      const Tensor& A = p.value("ssm.A");
      kernel::gemm_nn(bsz, d, d, dz, d, A.data(), d, dprev, d, true);
    }
    if (has_gate(a)) {
      for (std::size_t i = 0; i < bsz; ++i) {
        const std::size_t row = t * bsz + i;
        for (std::size_t j = 0; j < d; ++j) {
          const double gv = tr.gates(row, j), qv = tr.tanh_q(row, j), dzv = dz[i * d + j];
          dp(row, j) = dzv * qv * gv * (1.0 - gv);
          dq(row, j) = dzv * gv * (1.0 - qv * qv);
        }
      }
      kernel::gemm_nn(bsz, d, d, &dp(t * bsz, 0), d, p.value("ssm.Wz").data(), d, dprev, d, true);
      kernel::gemm_nn(bsz, d, d, &dq(t * bsz, 0), d, p.value("ssm.Uz").data(), d, dprev, d, true);
    }
    if (has_concat(a)) {
      kernel::gemm_nn(bsz, d, d, dz, d, p.value("ssm.Fz").data(), d, dprev, d, true);
    }
  }

  // Parameter gradients in bulk: rows t >= 1 pair with z(t-1) = states shifted by B rows.
  const std::size_t m = n - bsz;
  const double* dz1 = g.data() + bsz * d;
  const double* zprev = tr.states.data();
  {
    Tensor& db = p.grad("ssm.b");
    for (std::size_t r = bsz; r < n; ++r)
      for (std::size_t j = 0; j < d; ++j) db[j] += g(r, j);
  }
  if (m > 0 && has_transition(a)) kernel::gemm_tn(d, d, m, dz1, d, zprev, d, p.grad("ssm.A").data(), d);
  if (has_gate(a)) {
    Tensor dsw({bsz, d}), dsu({bsz, d});
    if (m > 0) {
      kernel::gemm_tn(d, d, m, dp.data() + bsz * d, d, zprev, d, p.grad("ssm.Wz").data(), d);
      kernel::gemm_tn(d, d, m, dq.data() + bsz * d, d, zprev, d, p.grad("ssm.Uz").data(), d);
    }
    for (std::size_t r = bsz; r < n; ++r)
      for (std::size_t j = 0; j < d; ++j) {
        dsw(r % bsz, j) += dp(r, j);
        dsu(r % bsz, j) += dq(r, j);
      }
    Tensor& dbg = p.grad("ssm.bg");
    for (std::size_t i = 0; i < bsz; ++i)
      for (std::size_t j = 0; j < d; ++j) dbg[j] += dsw(i, j);
    kernel::gemm_tn(d, ds, bsz, dsw.data(), d, style.data(), ds, p.grad("ssm.Ws").data(), ds);
    kernel::gemm_tn(d, ds, bsz, dsu.data(), d, style.data(), ds, p.grad("ssm.Us").data(), ds);
    kernel::gemm_nn(bsz, ds, d, dsw.data(), d, p.value("ssm.Ws").data(), ds, d_style.data(), ds, true);
    kernel::gemm_nn(bsz, ds, d, dsu.data(), d, p.value("ssm.Us").data(), ds, d_style.data(), ds, true);
  }
  if (has_concat(a)) {
    if (m > 0) kernel::gemm_tn(d, d, m, dz1, d, zprev, d, p.grad("ssm.Fz").data(), d);
    Tensor dsf({bsz, d});
    for (std::size_t r = bsz; r < n; ++r)
      for (std::size_t j = 0; j < d; ++j) dsf(r % bsz, j) += g(r, j);
    Tensor& dfb = p.grad("ssm.fb");
    for (std::size_t i = 0; i < bsz; ++i)
      for (std::size_t j = 0; j < d; ++j) dfb[j] += dsf(i, j);
    kernel::gemm_tn(d, ds, bsz, dsf.data(), d, style.data(), ds, p.grad("ssm.Fs").data(), ds);
    kernel::gemm_nn(bsz, ds, d, dsf.data(), d, p.value("ssm.Fs").data(), ds, d_style.data(), ds, true);
  }
  return g;  // dL/du(t) equals the completed dL/dz(t) for every t
}

double constrain_A(ParamStore& p, int iters) {
  if (!p.contains("ssm.A")) return 0.0;
  Tensor& A = p.value("ssm.A");
  const double s = spectral_norm_estimate(A, iters);
  if (s > kSpectralCap) {
    const double scale = kSpectralCap / s;
    for (double& v : A.storage()) v *= scale;
  }
  return s;
}

}  // namespace lssvc
