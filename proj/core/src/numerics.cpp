#include "lssvc/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "lssvc/error.hpp"

namespace lssvc {

namespace {

std::size_t checked_extent(const Shape& shape) {
  if (shape.empty() || shape.size() > 3) {
    throw InvalidArgument("tensor rank must be 1..3, got shape " + shape_string(shape));
  }
  std::size_t n = 1;
  for (std::size_t e : shape) {
    if (e == 0) throw InvalidArgument("tensor extents must be positive: " + shape_string(shape));
    n *= e;
  }
  return n;
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  data_.assign(checked_extent(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (checked_extent(shape_) != data_.size()) {
    throw InvalidArgument("data length " + std::to_string(data_.size()) +
                          " does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  switch (shape_.size()) {
    case 1: return 1;
    case 2: return shape_[0];
    case 3: return shape_[0] * shape_[1];
    default: return 0;
  }
}

std::size_t Tensor::cols() const { return shape_.empty() ? 0 : shape_.back(); }

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor transpose(const Tensor& m) {
  const std::size_t r = m.rows(), c = m.cols();
  Tensor t({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) t(j, i) = m(i, j);
  return t;
}

namespace kernel {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * ldc;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    const double* arow = a + i * lda;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * lda;
    const double* brow = b + p * ldb;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      double* crow = c + i * ldc;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  // Two rows of A against four rows of B at a time; each output still sums
  // over p in order.
  std::size_t i = 0;
  for (; i + 2 <= m; i += 2) {
    const double* a0 = a + i * lda;
    const double* a1 = a0 + lda;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const double* b0 = b + j * ldb;
      const double* b1 = b0 + ldb;
      const double* b2 = b1 + ldb;
      const double* b3 = b2 + ldb;
      double s00 = 0, s01 = 0, s02 = 0, s03 = 0, s10 = 0, s11 = 0, s12 = 0, s13 = 0;
      for (std::size_t p = 0; p < k; ++p) {
        const double x0 = a0[p], x1 = a1[p];
        s00 += x0 * b0[p];
        s01 += x0 * b1[p];
        s02 += x0 * b2[p];
        s03 += x0 * b3[p];
        s10 += x1 * b0[p];
        s11 += x1 * b1[p];
        s12 += x1 * b2[p];
        s13 += x1 * b3[p];
      }
      double* c0 = c + i * ldc + j;
      double* c1 = c0 + ldc;
      if (accumulate) {
        c0[0] += s00, c0[1] += s01, c0[2] += s02, c0[3] += s03;
        c1[0] += s10, c1[1] += s11, c1[2] += s12, c1[3] += s13;
      } else {
        c0[0] = s00, c0[1] = s01, c0[2] = s02, c0[3] = s03;
        c1[0] = s10, c1[1] = s11, c1[2] = s12, c1[3] = s13;
      }
    }
    for (; j < n; ++j) {
      const double* brow = b + j * ldb;
      double s0 = 0.0, s1 = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        s0 += a0[p] * brow[p];
        s1 += a1[p] * brow[p];
      }
      double* c0 = c + i * ldc + j;
      c0[0] = accumulate ? c0[0] + s0 : s0;
      c0[ldc] = accumulate ? c0[ldc] + s1 : s1;
    }
  }
  for (; i < m; ++i) {
    const double* arow = a + i * lda;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * ldb;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      c[i * ldc + j] = accumulate ? c[i * ldc + j] + s : s;
    }
  }
}

}  // namespace kernel

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw InvalidArgument("matmul shape mismatch: " + shape_string(a.shape()) + " x " +
                          shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  kernel::gemm_nn(m, n, k, a.data(), k, b.data(), n, c.data(), n, false);
  return c;
}

double frobenius_norm(const Tensor& m) {
  double s = 0.0;
  for (double v : m.values()) s += v * v;
  return std::sqrt(s);
}

double spectral_norm_estimate(const Tensor& m, int iters) {
  if (m.rank() != 2 || m.dim(0) != m.dim(1)) {
    throw InvalidArgument("spectral_norm_estimate needs a square matrix, got " +
                          shape_string(m.shape()));
  }
  if (iters < 1) throw InvalidArgument("spectral_norm_estimate: iters must be >= 1");
  const std::size_t n = m.dim(0);
  std::vector<double> v(n, 1.0 / std::sqrt(static_cast<double>(n)));
  std::vector<double> av(n), atav(n);
  double sigma = 0.0;
  for (int it = 0; it < iters; ++it) {
    kernel::gemm_nt(n, 1, n, m.data(), n, v.data(), n, av.data(), 1, false);
    std::fill(atav.begin(), atav.end(), 0.0);
    kernel::gemm_tn(n, 1, n, m.data(), n, av.data(), 1, atav.data(), 1);
    double norm = 0.0;
    for (double x : atav) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    for (std::size_t i = 0; i < n; ++i) v[i] = atav[i] / norm;
    kernel::gemm_nt(n, 1, n, m.data(), n, v.data(), n, av.data(), 1, false);
    double s = 0.0;
    for (double x : av) s += x * x;
    sigma = std::sqrt(s);
  }
  return sigma;
}

Tensor affine_forward(const Tensor& x, const Tensor& w, const Tensor& bias) {
  const std::size_t rows = x.rows(), in = x.cols(), out = w.dim(0);
  if (w.rank() != 2 || w.dim(1) != in || bias.size() != out) {
    throw InvalidArgument("affine shape mismatch: x " + shape_string(x.shape()) + ", W " +
                          shape_string(w.shape()) + ", b " + shape_string(bias.shape()));
  }
  Tensor y({rows, out});
  for (std::size_t r = 0; r < rows; ++r) std::copy(bias.data(), bias.data() + out, &y(r, 0));
  Tensor wt = transpose(w);
  kernel::gemm_nn(rows, out, in, x.data(), in, wt.data(), out, y.data(), out, true);
  return y;
}

void affine_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dw, Tensor& db,
                     Tensor* dx) {
  const std::size_t rows = x.rows(), in = x.cols(), out = w.dim(0);
  kernel::gemm_tn(out, in, rows, dy.data(), out, x.data(), in, dw.data(), in);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < out; ++j) db[j] += dy(r, j);
  if (dx) {
    *dx = Tensor({rows, in});
    kernel::gemm_nn(rows, in, out, dy.data(), out, w.data(), in, dx->data(), in, false);
  }
}

void AdamHyper::validate() const {
  if (!(lr > 0.0)) throw InvalidArgument("Adam lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw InvalidArgument("Adam beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw InvalidArgument("Adam beta2 must be in [0, 1)");
  if (!(eps > 0.0)) throw InvalidArgument("Adam eps must be > 0");
  if (step_count < 0) throw InvalidArgument("Adam step_count must be >= 0");
}

Tensor& ParamStore::add(std::string name, Tensor value) {
  if (index_.count(name)) throw InvalidArgument("duplicate parameter name: " + name);
  index_.emplace(name, entries_.size());
  Entry e;
  e.grad = Tensor(value.shape());
  e.m = Tensor(value.shape());
  e.v = Tensor(value.shape());
  e.value = std::move(value);
  e.name = std::move(name);
  entries_.push_back(std::move(e));
  return entries_.back().value;
}

bool ParamStore::contains(std::string_view name) const {
  return index_.count(std::string(name)) != 0;
}

void ParamStore::erase(std::string_view name) {
  const std::size_t i = index_of(name);
  entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(i));
  index_.clear();
  for (std::size_t j = 0; j < entries_.size(); ++j) index_.emplace(entries_[j].name, j);
}

std::size_t ParamStore::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw InvalidArgument("unknown parameter: " + std::string(name));
  return it->second;
}

ParamStore::Entry& ParamStore::entry(std::string_view name) { return entries_[index_of(name)]; }
const ParamStore::Entry& ParamStore::entry(std::string_view name) const {
  return entries_[index_of(name)];
}
Tensor& ParamStore::value(std::string_view name) { return entry(name).value; }
const Tensor& ParamStore::value(std::string_view name) const { return entry(name).value; }
Tensor& ParamStore::grad(std::string_view name) { return entry(name).grad; }
const Tensor& ParamStore::grad(std::string_view name) const { return entry(name).grad; }

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.grad.fill(0.0);
}

void ParamStore::reset_moments() {
  for (auto& e : entries_) {
    e.m.fill(0.0);
    e.v.fill(0.0);
  }
}

void ParamStore::round_to_float() {
  for (auto& e : entries_)
    for (double& x : e.value.storage()) x = static_cast<double>(static_cast<float>(x));
}

void adam_step(ParamStore& store, AdamHyper& hyper) {
  hyper.validate();
  for (const auto& e : store.entries()) {
    if (!e.grad.all_finite()) throw NonFiniteError("non-finite gradient in parameter " + e.name);
  }
  const std::int64_t t = hyper.step_count + 1;
  const double corr1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(t));
  const double corr2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(t));
  for (auto& e : store.entries()) {
    double* p = e.value.data();
    const double* g = e.grad.data();
    double* m = e.m.data();
    double* v = e.v.data();
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
      v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
      const double mhat = m[i] / corr1;
      const double vhat = v[i] / corr2;
      p[i] -= hyper.lr * mhat / (std::sqrt(vhat) + hyper.eps);
    }
  }
  hyper.step_count = t;
  store.zero_grad();
}

GradCheckReport grad_check_report(const LossFn& loss_fn, ParamStore& store, double h) {
  if (!(h > 0.0)) throw InvalidArgument("grad_check: h must be > 0");
  store.zero_grad();
  const double f0 = loss_fn(store, true);
  std::vector<Tensor> analytic;
  analytic.reserve(store.entries().size());
  for (const auto& e : store.entries()) analytic.push_back(e.grad);
  store.zero_grad();
  const double f1 = loss_fn(store, false);
  if (f0 != f1) {
    throw InvalidArgument("grad_check: loss function is not deterministic (" +
                          std::to_string(f0) + " vs " + std::to_string(f1) + ")");
  }

  GradCheckReport report;
  for (std::size_t k = 0; k < store.entries().size(); ++k) {
    auto& e = store.entries()[k];
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double saved = e.value[i];
      e.value[i] = saved + h;
      const double fp = loss_fn(store, false);
      e.value[i] = saved - h;
      const double fm = loss_fn(store, false);
      e.value[i] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double err = std::abs(a - numeric) / denom;
      ++report.coordinates;
      if (std::max(std::abs(a), std::abs(numeric)) >= 1e-6)
        report.max_rel_error_significant = std::max(report.max_rel_error_significant, err);
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_param = e.name;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  store.zero_grad();
  return report;
}

double grad_check(const LossFn& loss_fn, ParamStore& store, double h) {
  return grad_check_report(loss_fn, store, h).max_rel_error;
}

}  // namespace lssvc
