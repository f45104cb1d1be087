#pragma once

// Dense double-precision tensors with define-by-run reverse-mode autodiff.
//
// A Tensor is a cheap handle onto shared storage (shape, values, gradient):
// copies alias the same buffers. While a Tape is active, differentiable ops
// append a backward closure for each result they produce; Tape::backward
// replays the closures in reverse creation order, which is a valid
// topological order because the tape is rebuilt from scratch every step.
//
// The requires_grad flag lives on the handle, not the storage. Parameter
// owners (models) keep the canonical handles; flip the flag only there.

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "redkit/common.hpp"

namespace redkit {

struct TensorStorage {
  std::vector<int> shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until first accumulation
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0,
                  bool requires_grad = false);
  Tensor(std::vector<int> shape, std::vector<double> values,
         bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(std::vector<int> shape, std::mt19937_64& rng,
                      double stddev = 1.0, bool requires_grad = false);

  bool defined() const { return storage_ != nullptr; }
  const std::vector<int>& shape() const { return storage_->shape; }
  int rank() const { return static_cast<int>(storage_->shape.size()); }
  std::size_t numel() const { return storage_->values.size(); }

  // Rank-2 accessors; throw on other ranks.
  int rows() const;
  int cols() const;

  double* data() { return storage_->values.data(); }
  const double* data() const { return storage_->values.data(); }
  double at(std::size_t i) const { return storage_->values[i]; }
  double scalar_value() const;

  bool requires_grad() const { return requires_grad_; }
  Tensor& set_requires_grad(bool enabled);

  bool has_grad() const { return !storage_->grad.empty(); }
  // Gradient buffer, zero-initialized on first access.
  std::vector<double>& grad();
  // Read-only gradient pointer; nullptr when nothing ever accumulated.
  const double* grad_data() const;
  void zero_grad();

  // Same storage, detached from gradient tracking.
  Tensor detached() const;
  // Deep copy of the values (fresh storage, no grad).
  Tensor clone() const;

  bool all_finite() const;
  bool grad_all_finite() const;

 private:
  std::shared_ptr<TensorStorage> storage_;
  bool requires_grad_ = false;
};

class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(std::function<void()> backward);
  std::size_t size() const { return entries_.size(); }

  // Seeds the scalar loss gradient with 1 and replays all recorded
  // closures in reverse order, accumulating into every reachable
  // requires_grad tensor.
  void backward(Tensor& loss);

 private:
  std::vector<std::function<void()>> entries_;
};

// Suspends gradient recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// ---------------------------------------------------------------------------
// Differentiable operations. All validate shapes and throw DimensionError /
// IndexError on misuse. Results carry requires_grad when any input does and
// a tape is active.

// Standard matrix product, a[m,k] * b[k,n] -> [m,n].
Tensor matmul(const Tensor& a, const Tensor& b);

// Element-wise; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor tanh_activation(const Tensor& x);

// x[n,d] + bias[d] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);

// Row j of x[n,d] scaled by weights[j] (weights is a rank-1 tensor of n).
Tensor mul_rowwise(const Tensor& x, const Tensor& weights);

// Mean over rows: [n,d] -> rank-1 [d].
Tensor mean_rows(const Tensor& x);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

// Concatenation of rank-1 tensors into one rank-1 tensor.
Tensor concat(const std::vector<Tensor>& parts);

// Stack k rank-1 tensors of equal length d into [k,d].
Tensor stack_rows(const std::vector<Tensor>& rows);

// Numerically stable softmax. Rank-1 input, or per-row over rank-2.
Tensor softmax(const Tensor& x);
Tensor softmax_rows(const Tensor& x);

// Mean over the batch of -log softmax(logits)[label]; logits[n,C].
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// a.b / (|a||b|) as a differentiable scalar; rejects zero-norm inputs.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);
double cosine_similarity_value(const std::vector<double>& a,
                               const std::vector<double>& b);

// Identity forward; multiplies the incoming gradient by -1 on backward.
Tensor gradient_reverse(const Tensor& x);

// Rows of table[V,d] selected by ids; backward scatter-adds into the table.
Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids);

struct AttentionParams {
  Tensor query_proj;  // [d,dk]
  Tensor key_proj;    // [d,dk]
  Tensor value_proj;  // [d,dv]
};

enum class AttentionMask { kNone, kCausal };

// Single-head scaled dot-product attention of queries from `q_input` against
// keys/values from `kv_input`. key_keep, when non-empty, flags which key
// positions participate (0 = masked out).
Tensor attention(const Tensor& q_input, const Tensor& kv_input,
                 const AttentionParams& params, AttentionMask mask,
                 const std::vector<int>& key_keep = {});

// Self-attention without positional terms: attention(x, x, ...).
Tensor self_attention(const Tensor& x, const AttentionParams& params,
                      const std::vector<int>& key_keep = {});

}  // namespace redkit
