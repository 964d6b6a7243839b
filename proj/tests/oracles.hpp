#pragma once

// Plain-loop reference implementations shared by the unit and acceptance
// tests. Nothing here calls into the library's kernels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "lssvc/numerics.hpp"
#include "lssvc/rng.hpp"
#include "lssvc/ssm.hpp"

namespace oracle {

using lssvc::Tensor;

inline Tensor random_tensor(lssvc::Shape shape, lssvc::Rng& rng, double k = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.storage()) v = rng.uniform(-k, k);
  return t;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(p, j);
      c(i, j) = s;
    }
  return c;
}

// y = W x + b for a single vector.
inline std::vector<double> affine(const Tensor& w, const std::vector<double>& x, const Tensor& b) {
  std::vector<double> y(w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double s = b.empty() ? 0.0 : b[i];
    for (std::size_t j = 0; j < w.cols(); ++j) s += w(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

inline std::vector<double> affine(const Tensor& w, const std::vector<double>& x) {
  return affine(w, x, Tensor());
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double v : a.storage()) m = std::max(m, std::abs(v));
  return m;
}

// Relative error scaled by the larger magnitude of either side (floor 1).
inline double rel_diff(const Tensor& a, const Tensor& b) {
  return max_abs_diff(a, b) / std::max({1.0, max_abs(a), max_abs(b)});
}

// One GRU step, gate rows ordered (reset, update, candidate).
inline std::vector<double> gru_step(const std::vector<double>& x, const std::vector<double>& h,
                                    const Tensor& w, const Tensor& u, const Tensor& b) {
  const std::size_t n = h.size();
  std::vector<double> out(n);
  std::vector<double> r(n), z(n);
  for (std::size_t j = 0; j < n; ++j) {
    double ar = b[j], az = b[n + j];
    for (std::size_t k = 0; k < x.size(); ++k) {
      ar += w(j, k) * x[k];
      az += w(n + j, k) * x[k];
    }
    for (std::size_t k = 0; k < n; ++k) {
      ar += u(j, k) * h[k];
      az += u(n + j, k) * h[k];
    }
    r[j] = sigmoid(ar);
    z[j] = sigmoid(az);
  }
  for (std::size_t j = 0; j < n; ++j) {
    double ac = b[2 * n + j];
    for (std::size_t k = 0; k < x.size(); ++k) ac += w(2 * n + j, k) * x[k];
    for (std::size_t k = 0; k < n; ++k) ac += u(2 * n + j, k) * r[k] * h[k];
    out[j] = (1.0 - z[j]) * h[j] + z[j] * std::tanh(ac);
  }
  return out;
}

// Runs a GRU over rows of x (T x in) from a zero state.
inline Tensor gru_sequence(const Tensor& x, const Tensor& w, const Tensor& u, const Tensor& b) {
  const std::size_t n = u.cols();
  Tensor out({x.rows(), n});
  std::vector<double> h(n, 0.0);
  for (std::size_t t = 0; t < x.rows(); ++t) {
    h = gru_step(std::vector<double>(x.row(t).begin(), x.row(t).end()), h, w, u, b);
    std::copy(h.begin(), h.end(), out.row(t).begin());
  }
  return out;
}

inline std::vector<double> normalized(std::vector<double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n) + 1e-8;
  for (double& x : v) x /= n;
  return v;
}

inline double log_sum_exp(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += std::exp(x);
  return std::log(s);
}

inline double cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::vector<double> row(logits.row(i).begin(), logits.row(i).end());
    total += log_sum_exp(row) - row[static_cast<std::size_t>(targets[i])];
  }
  return total / static_cast<double>(logits.rows());
}

// Symmetric InfoNCE over unit rows with temperature tau.
inline double info_nce(const Tensor& a, const Tensor& t, double tau) {
  const std::size_t n = a.rows();
  Tensor logits({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * t(j, k);
      logits(i, j) = s / tau;
    }
  double a2t = 0.0, t2a = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(n), col(n);
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = logits(i, j);
      col[j] = logits(j, i);
    }
    a2t += log_sum_exp(row) - logits(i, i);
    t2a += log_sum_exp(col) - logits(i, i);
  }
  return 0.5 * (a2t + t2a) / static_cast<double>(n);
}

inline double time_consistency(const Tensor& z) {
  double s = 0.0;
  for (std::size_t t = 0; t + 1 < z.rows(); ++t)
    for (std::size_t k = 0; k < z.cols(); ++k) {
      const double d = z(t + 1, k) - z(t, k);
      s += d * d;
    }
  return s / static_cast<double>(z.rows() - 1);
}

// Unrolled latent recurrence for one item: z(1) = u(1), then
// z(t) = A z + [gate] + [concat] + b + u(t).
inline Tensor rollout(const lssvc::ParamStore& p, lssvc::Ablation a, const Tensor& inputs,
                      const std::vector<double>& s) {
  const std::size_t steps = inputs.rows(), d = inputs.cols();
  Tensor z({steps, d});
  for (std::size_t k = 0; k < d; ++k) z(0, k) = inputs(0, k);
  const Tensor& b = p.value("ssm.b");
  for (std::size_t t = 1; t < steps; ++t) {
    const std::vector<double> prev(z.row(t - 1).begin(), z.row(t - 1).end());
    std::vector<double> next(d);
    for (std::size_t k = 0; k < d; ++k) next[k] = inputs(t, k) + b[k];
    if (lssvc::has_transition(a)) {
      const auto az = affine(p.value("ssm.A"), prev);
      for (std::size_t k = 0; k < d; ++k) next[k] += az[k];
    }
    if (lssvc::has_gate(a)) {
      const auto wz = affine(p.value("ssm.Wz"), prev), ws = affine(p.value("ssm.Ws"), s, p.value("ssm.bg"));
      const auto uz = affine(p.value("ssm.Uz"), prev), us = affine(p.value("ssm.Us"), s);
      for (std::size_t k = 0; k < d; ++k) next[k] += sigmoid(wz[k] + ws[k]) * std::tanh(uz[k] + us[k]);
    }
    if (lssvc::has_concat(a)) {
      const auto fz = affine(p.value("ssm.Fz"), prev), fs = affine(p.value("ssm.Fs"), s, p.value("ssm.fb"));
      for (std::size_t k = 0; k < d; ++k) next[k] += fz[k] + fs[k];
    }
    std::copy(next.begin(), next.end(), z.row(t).begin());
  }
  return z;
}

}  // namespace oracle
