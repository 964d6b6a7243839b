#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lssvc {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

// Dense row-major tensor of doubles, rank 1..3.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Matrix view of a rank-2 tensor; rank-1 is treated as a single row and
  // rank-3 as (d0*d1) x d2.
  std::size_t rows() const;
  std::size_t cols() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols(), cols()};
  }

  void fill(double v);
  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

Tensor transpose(const Tensor& m);

// Standard matrix product. Rejects mismatched inner extents, reporting both
// shapes.
Tensor matmul(const Tensor& a, const Tensor& b);

double frobenius_norm(const Tensor& m);

// Largest singular value by power iteration on A^T A, started from the
// normalized all-ones vector.
double spectral_norm_estimate(const Tensor& m, int iters = 30);

// Raw row-major kernels shared by the sequence layers. All accumulation over
// the contraction index runs left to right so results are bit-reproducible.
namespace kernel {

// C[m x n] (+)= A[m x k] * B[k x n]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate);

// C[m x n] += A[k x m]^T * B[k x n]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc);

// C[m x n] (+)= A[m x k] * B[n x k]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate);

}  // namespace kernel

// Y[rows x out] = X[rows x in] * W^T + bias, W is out x in.
Tensor affine_forward(const Tensor& x, const Tensor& w, const Tensor& bias);
// Accumulates dW, db and returns dX (or skips dX when dx == nullptr).
void affine_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dw, Tensor& db,
                     Tensor* dx);

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step_count = 0;

  void validate() const;
};

// Named trainable tensors with gradient accumulators and Adam moments.
// Iteration order is insertion order.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor m;
    Tensor v;
  };

  Tensor& add(std::string name, Tensor value);
  bool contains(std::string_view name) const;
  void erase(std::string_view name);

  Tensor& value(std::string_view name);
  const Tensor& value(std::string_view name) const;
  Tensor& grad(std::string_view name);
  const Tensor& grad(std::string_view name) const;
  Entry& entry(std::string_view name);
  const Entry& entry(std::string_view name) const;

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t parameter_count() const;

  void zero_grad();
  void reset_moments();
  // Rounds every value to the nearest float32; checkpoints store float32.
  void round_to_float();

 private:
  std::size_t index_of(std::string_view name) const;

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Bias-corrected Adam update on every entry, then increments step_count and
// zeroes gradients. Throws NonFiniteError naming the parameter if any
// gradient is NaN/Inf (no parameter is touched in that case).
void adam_step(ParamStore& store, AdamHyper& hyper);

// Loss callback for grad_check: evaluates the loss at the store's current
// values and, when `with_grad` is set, writes analytic gradients into the
// store's gradient accumulators.
using LossFn = std::function<double(ParamStore&, bool with_grad)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
  // Same metric restricted to coordinates with max(|a|, |n|) >= 1e-6, where
  // the float64 rounding of the loss no longer dominates the difference.
  double max_rel_error_significant = 0.0;
};

// Central-difference check of every coordinate in `store`. The per-coordinate
// error is |a - n| / max(|a|, |n|, 1e-8). Rejects a loss that evaluates to
// different values on two identical calls.
GradCheckReport grad_check_report(const LossFn& loss_fn, ParamStore& store, double h = 1e-4);
double grad_check(const LossFn& loss_fn, ParamStore& store, double h = 1e-4);

}  // namespace lssvc
