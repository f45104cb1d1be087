#include "redkit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>

namespace redkit {

namespace {

thread_local std::vector<Tape*> g_tape_stack;

std::size_t product(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int s : shape) {
    if (s <= 0) throw DimensionError("tensor dimensions must be positive");
    n *= static_cast<std::size_t>(s);
  }
  return n;
}

bool grad_wanted(const Tensor& t) {
  return Tape::active() != nullptr && t.requires_grad();
}

std::string shape_str(const Tensor& t) {
  std::string s = "[";
  for (int i = 0; i < t.rank(); ++i) {
    if (i) s += ",";
    s += std::to_string(t.shape()[i]);
  }
  return s + "]";
}

// Marks `out` as tracked and records the closure. Call only when at least
// one input wants gradients. Closures must accumulate (+=) into input grads
// and early-return when the output's grad was never touched (dead branch).
void track(Tensor& out, std::function<void()> backward) {
  out.set_requires_grad(true);
  Tape::active()->record(std::move(backward));
}

constexpr double kMaskedLogit = -1e30;

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(std::vector<int> shape, double fill, bool requires_grad)
    : storage_(std::make_shared<TensorStorage>()),
      requires_grad_(requires_grad) {
  storage_->values.assign(product(shape), fill);
  storage_->shape = std::move(shape);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values,
               bool requires_grad)
    : storage_(std::make_shared<TensorStorage>()),
      requires_grad_(requires_grad) {
  if (values.size() != product(shape)) {
    throw DimensionError("value count does not match shape");
  }
  storage_->values = std::move(values);
  storage_->shape = std::move(shape);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, std::vector<double>{value}, requires_grad);
}

Tensor Tensor::randn(std::vector<int> shape, std::mt19937_64& rng,
                     double stddev, bool requires_grad) {
  Tensor t(std::move(shape), 0.0, requires_grad);
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.storage_->values) v = dist(rng);
  return t;
}

int Tensor::rows() const {
  if (rank() != 2) throw DimensionError("rows(): tensor is not rank-2");
  return storage_->shape[0];
}

int Tensor::cols() const {
  if (rank() != 2) throw DimensionError("cols(): tensor is not rank-2");
  return storage_->shape[1];
}

double Tensor::scalar_value() const {
  if (numel() != 1) throw DimensionError("scalar_value(): tensor is not scalar");
  return storage_->values[0];
}

Tensor& Tensor::set_requires_grad(bool enabled) {
  requires_grad_ = enabled;
  return *this;
}

std::vector<double>& Tensor::grad() {
  if (storage_->grad.empty()) storage_->grad.assign(numel(), 0.0);
  return storage_->grad;
}

const double* Tensor::grad_data() const {
  return storage_->grad.empty() ? nullptr : storage_->grad.data();
}

void Tensor::zero_grad() {
  std::fill(storage_->grad.begin(), storage_->grad.end(), 0.0);
}

Tensor Tensor::detached() const {
  Tensor t;
  t.storage_ = storage_;
  t.requires_grad_ = false;
  return t;
}

Tensor Tensor::clone() const {
  Tensor t;
  t.storage_ = std::make_shared<TensorStorage>();
  t.storage_->shape = storage_->shape;
  t.storage_->values = storage_->values;
  return t;
}

bool Tensor::all_finite() const {
  for (double v : storage_->values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool Tensor::grad_all_finite() const {
  for (double v : storage_->grad) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Tape

Tape::Tape() { g_tape_stack.push_back(this); }

Tape::~Tape() {
  if (!g_tape_stack.empty() && g_tape_stack.back() == this) {
    g_tape_stack.pop_back();
  } else {
    std::erase(g_tape_stack, this);
  }
}

Tape* Tape::active() {
  return g_tape_stack.empty() ? nullptr : g_tape_stack.back();
}

void Tape::record(std::function<void()> backward) {
  entries_.push_back(std::move(backward));
}

void Tape::backward(Tensor& loss) {
  if (loss.numel() != 1) {
    throw DimensionError("backward() expects a scalar loss");
  }
  loss.grad()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
}

NoGradGuard::NoGradGuard() { g_tape_stack.push_back(nullptr); }

NoGradGuard::~NoGradGuard() {
  if (!g_tape_stack.empty() && g_tape_stack.back() == nullptr) {
    g_tape_stack.pop_back();
  }
}

// ---------------------------------------------------------------------------
// Ops

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw DimensionError("matmul expects rank-2 tensors");
  }
  const int m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul inner dimensions disagree: " + shape_str(a) +
                         " vs " + shape_str(b));
  }
  Tensor out({m, n});
  {
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (int i = 0; i < m; ++i) {
      for (int kk = 0; kk < k; ++kk) {
        const double av = pa[i * k + kk];
        if (av == 0.0) continue;
        const double* brow = pb + kk * n;
        double* orow = po + i * n;
        for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  }
  const bool ga = grad_wanted(a), gb = grad_wanted(b);
  if (ga || gb) {
    Tensor at = a, bt = b, ot = out;
    track(out, [at, bt, ot, m, k, n, ga, gb]() mutable {
      const double* g = ot.grad_data();
      if (!g) return;
      if (ga) {
        // grad_a = g . b^T
        double* da = at.grad().data();
        const double* pb = bt.data();
        for (int i = 0; i < m; ++i) {
          for (int kk = 0; kk < k; ++kk) {
            double acc = 0.0;
            const double* grow = g + i * n;
            const double* brow = pb + kk * n;
            for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
            da[i * k + kk] += acc;
          }
        }
      }
      if (gb) {
        // grad_b = a^T . g
        double* db = bt.grad().data();
        const double* pa = at.data();
        for (int i = 0; i < m; ++i) {
          const double* grow = g + i * n;
          for (int kk = 0; kk < k; ++kk) {
            const double av = pa[i * k + kk];
            if (av == 0.0) continue;
            double* brow = db + kk * n;
            for (int j = 0; j < n; ++j) brow[j] += av * grow[j];
          }
        }
      }
    });
  }
  return out;
}

namespace {

Tensor add_like(const Tensor& a, const Tensor& b, const char* name,
                bool negate_b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(name) + ": shape mismatch " +
                         shape_str(a) + " vs " + shape_str(b));
  }
  Tensor out(a.shape());
  const std::size_t n = out.numel();
  const double sign = negate_b ? -1.0 : 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.data()[i] = a.at(i) + sign * b.at(i);
  }
  const bool ga = grad_wanted(a), gb = grad_wanted(b);
  if (ga || gb) {
    Tensor at = a, bt = b, ot = out;
    track(out, [at, bt, ot, n, ga, gb, sign]() mutable {
      const double* g = ot.grad_data();
      if (!g) return;
      if (ga) {
        double* da = at.grad().data();
        for (std::size_t i = 0; i < n; ++i) da[i] += g[i];
      }
      if (gb) {
        double* db = bt.grad().data();
        for (std::size_t i = 0; i < n; ++i) db[i] += sign * g[i];
      }
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return add_like(a, b, "add", false);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return add_like(a, b, "sub", true);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mul: shape mismatch " + shape_str(a) + " vs " +
                         shape_str(b));
  }
  Tensor out(a.shape());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.at(i) * b.at(i);
  const bool ga = grad_wanted(a), gb = grad_wanted(b);
  if (ga || gb) {
    Tensor at = a, bt = b, ot = out;
    track(out, [at, bt, ot, n, ga, gb]() mutable {
      const double* g = ot.grad_data();
      if (!g) return;
      if (ga) {
        double* da = at.grad().data();
        const double* pb = bt.data();
        for (std::size_t i = 0; i < n; ++i) da[i] += g[i] * pb[i];
      }
      if (gb) {
        double* db = bt.grad().data();
        const double* pa = at.data();
        for (std::size_t i = 0; i < n; ++i) db[i] += g[i] * pa[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, double factor) {
  Tensor out(x.shape());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = factor * x.at(i);
  if (grad_wanted(x)) {
    Tensor xt = x, ot = out;
    track(out, [xt, ot, n, factor]() mutable {
      const double* g = ot.grad_data();
      if (!g) return;
      double* dx = xt.grad().data();
      for (std::size_t i = 0; i < n; ++i) dx[i] += factor * g[i];
    });
  }
  return out;
}

Tensor tanh_activation(const Tensor& x) {
  Tensor out(x.shape());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = std::tanh(x.at(i));
  if (grad_wanted(x)) {
    Tensor xt = x, ot = out;
    track(out, [xt, ot, n]() mutable {
      const double* g = ot.grad_data();
      if (!g) return;
      const double* y = ot.data();
      double* dx = xt.grad().data();
      for (std::size_t i = 0; i < n; ++i) dx[i] += g[i] * (1.0 - y[i] * y[i]);
    });
  }
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() != 2 || bias.rank() != 1 || bias.shape()[0] != x.cols()) {
    throw DimensionError("add_bias: expected x[n,d] and bias[d]");
  }
  const int n = x.rows(), d = x.cols();
  Tensor out({n, d});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      out.data()[i * d + j] = x.at(i * d + j) + bias.at(j);
    }
  }
  const bool gx = grad_wanted(x), gbias = grad_wanted(bias);
  if (gx || gbias) {
    Tensor xt = x, bt = bias, ot = out;
    track(out, [xt, bt, ot, n, d, gx, gbias]() mutable {
      const double* g = ot.grad_data();
      if (!g) return;
      if (gx) {
        double* dx = xt.grad().data();
        for (int i = 0; i < n * d; ++i) dx[i] += g[i];
      }
      if (gbias) {
        double* db = bt.grad().data();
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < d; ++j) db[j] += g[i * d + j];
        }
      }
    });
  }
  return out;
}

Tensor mul_rowwise(const Tensor& x, const Tensor& weights) {
  if (x.rank() != 2 || weights.rank() != 1 ||
      weights.shape()[0] != x.rows()) {
    throw DimensionError("mul_rowwise: expected x[n,d] and weights[n]");
  }
  const int n = x.rows(), d = x.cols();
  Tensor out({n, d});
  for (int i = 0; i < n; ++i) {
    const double w = weights.at(i);
    for (int j = 0; j < d; ++j) out.data()[i * d + j] = w * x.at(i * d + j);
  }
  const bool gx = grad_wanted(x), gw = grad_wanted(weights);
  if (gx || gw) {
    Tensor xt = x, wt = weights, ot = out;
    track(out, [xt, wt, ot, n, d, gx, gw]() mutable {
      const double* g = ot.grad_data();
      if (!g) return;
      if (gx) {
        double* dx = xt.grad().data();
        const double* w = wt.data();
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < d; ++j) dx[i * d + j] += g[i * d + j] * w[i];
        }
      }
      if (gw) {
        double* dw = wt.grad().data();
        const double* px = xt.data();
        for (int i = 0; i < n; ++i) {
          double acc = 0.0;
          for (int j = 0; j < d; ++j) acc += g[i * d + j] * px[i * d + j];
          dw[i] += acc;
        }
      }
    });
  }
  return out;
}

Tensor mean_rows(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("mean_rows expects rank-2");
  const int n = x.rows(), d = x.cols();
  Tensor out({d});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) out.data()[j] += x.at(i * d + j);
  }
  for (int j = 0; j < d; ++j) out.data()[j] /= n;
  if (grad_wanted(x)) {
    Tensor xt = x, ot = out;
    track(out, [xt, ot, n, d]() mutable {
      const double* g = ot.grad_data();
      if (!g) return;
      double* dx = xt.grad().data();
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) dx[i * d + j] += g[j] / n;
      }
    });
  }
  return out;
}

Tensor sum_all(const Tensor& x) {
  const std::size_t n = x.numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x.at(i);
  Tensor out = Tensor::scalar(acc);
  if (grad_wanted(x)) {
    Tensor xt = x, ot = out;
    track(out, [xt, ot, n]() mutable {
      const double* g = ot.grad_data();
      if (!g) return;
      double* dx = xt.grad().data();
      for (std::size_t i = 0; i < n; ++i) dx[i] += g[0];
    });
  }
  return out;
}

Tensor mean_all(const Tensor& x) {
  return scale(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ArgumentError("concat: no inputs");
  std::size_t total = 0;
  bool any_grad = false;
  for (const auto& p : parts) {
    if (p.rank() != 1) throw DimensionError("concat expects rank-1 tensors");
    total += p.numel();
    any_grad = any_grad || grad_wanted(p);
  }
  Tensor out({static_cast<int>(total)});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.data(), p.data() + p.numel(), out.data() + off);
    off += p.numel();
  }
  if (any_grad) {
    std::vector<Tensor> inputs = parts;
    Tensor ot = out;
    track(out, [inputs, ot]() mutable {
      const double* g = ot.grad_data();
      if (!g) return;
      std::size_t pos = 0;
      for (auto& p : inputs) {
        if (p.requires_grad()) {
          double* dp = p.grad().data();
          for (std::size_t i = 0; i < p.numel(); ++i) dp[i] += g[pos + i];
        }
        pos += p.numel();
      }
    });
  }
  return out;
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ArgumentError("stack_rows: no inputs");
  const int d = static_cast<int>(rows.front().numel());
  bool any_grad = false;
  for (const auto& r : rows) {
    if (r.rank() != 1 || static_cast<int>(r.numel()) != d) {
      throw DimensionError("stack_rows expects equal-length rank-1 tensors");
    }
    any_grad = any_grad || grad_wanted(r);
  }
  const int n = static_cast<int>(rows.size());
  Tensor out({n, d});
  for (int i = 0; i < n; ++i) {
    std::copy(rows[i].data(), rows[i].data() + d, out.data() + i * d);
  }
  if (any_grad) {
    std::vector<Tensor> inputs = rows;
    Tensor ot = out;
    track(out, [inputs, ot, d]() mutable {
      const double* g = ot.grad_data();
      if (!g) return;
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (!inputs[i].requires_grad()) continue;
        double* dr = inputs[i].grad().data();
        for (int j = 0; j < d; ++j) dr[j] += g[i * d + j];
      }
    });
  }
  return out;
}

namespace {

// Stable softmax of one row. Masked entries (logits near kMaskedLogit)
// underflow to exactly zero.
void softmax_row(const double* in, double* out, int n) {
  double mx = in[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, in[i]);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = std::exp(in[i] - mx);
    sum += out[i];
  }
  for (int i = 0; i < n; ++i) out[i] /= sum;
}

}  // namespace

Tensor softmax_rows(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("softmax_rows expects rank-2");
  const int n = x.rows(), c = x.cols();
  Tensor out({n, c});
  for (int i = 0; i < n; ++i) {
    softmax_row(x.data() + i * c, out.data() + i * c, c);
  }
  if (grad_wanted(x)) {
    Tensor xt = x, ot = out;
    track(out, [xt, ot, n, c]() mutable {
      const double* g = ot.grad_data();
      if (!g) return;
      const double* s = ot.data();
      double* dx = xt.grad().data();
      for (int i = 0; i < n; ++i) {
        const double* gr = g + i * c;
        const double* sr = s + i * c;
        double dot = 0.0;
        for (int j = 0; j < c; ++j) dot += gr[j] * sr[j];
        for (int j = 0; j < c; ++j) dx[i * c + j] += sr[j] * (gr[j] - dot);
      }
    });
  }
  return out;
}

Tensor softmax(const Tensor& x) {
  if (x.rank() == 2) return softmax_rows(x);
  if (x.rank() != 1) throw DimensionError("softmax expects rank-1 or rank-2");
  const int n = static_cast<int>(x.numel());
  Tensor out({n});
  softmax_row(x.data(), out.data(), n);
  if (grad_wanted(x)) {
    Tensor xt = x, ot = out;
    track(out, [xt, ot, n]() mutable {
      const double* g = ot.grad_data();
      if (!g) return;
      const double* s = ot.data();
      double* dx = xt.grad().data();
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += g[j] * s[j];
      for (int j = 0; j < n; ++j) dx[j] += s[j] * (g[j] - dot);
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) throw DimensionError("cross_entropy expects [n,C]");
  const int n = logits.rows(), c = logits.cols();
  if (static_cast<int>(labels.size()) != n) {
    throw DimensionError("cross_entropy: one label per logit row required");
  }
  for (int lab : labels) {
    if (lab < 0 || lab >= c) {
      throw IndexError("cross_entropy: label " + std::to_string(lab) +
                       " outside [0," + std::to_string(c) + ")");
    }
  }
  Tensor probs({n, c});  // cached for the backward rule
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double* row = logits.data() + i * c;
    double mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < c; ++j) {
      probs.data()[i * c + j] = std::exp(row[j] - mx);
      sum += probs.data()[i * c + j];
    }
    for (int j = 0; j < c; ++j) probs.data()[i * c + j] /= sum;
    loss += -(row[labels[i]] - mx - std::log(sum));
  }
  Tensor out = Tensor::scalar(loss / n);
  if (grad_wanted(logits)) {
    Tensor lt = logits, ot = out;
    std::vector<int> labs = labels;
    track(out, [lt, ot, probs, labs, n, c]() mutable {
      const double* g = ot.grad_data();
      if (!g) return;
      double* dl = lt.grad().data();
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < c; ++j) {
          const double onehot = (j == labs[i]) ? 1.0 : 0.0;
          dl[i * c + j] += g[0] * (probs.at(i * c + j) - onehot) / n;
        }
      }
    });
  }
  return out;
}

double cosine_similarity_value(const std::vector<double>& a,
                               const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) {
    throw DimensionError("cosine similarity: length mismatch");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) {
    throw DegenerateInputError("cosine similarity of a zero-norm vector");
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel() || a.numel() == 0) {
    throw DimensionError("cosine_similarity: length mismatch");
  }
  const std::size_t n = a.numel();
  double dot = 0.0, na2 = 0.0, nb2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    dot += a.at(i) * b.at(i);
    na2 += a.at(i) * a.at(i);
    nb2 += b.at(i) * b.at(i);
  }
  if (na2 == 0.0 || nb2 == 0.0) {
    throw DegenerateInputError("cosine_similarity of a zero-norm vector");
  }
  const double na = std::sqrt(na2), nb = std::sqrt(nb2);
  const double cosv = dot / (na * nb);
  Tensor out = Tensor::scalar(cosv);
  const bool ga = grad_wanted(a), gb = grad_wanted(b);
  if (ga || gb) {
    Tensor at = a, bt = b, ot = out;
    track(out, [at, bt, ot, n, na, nb, cosv, ga, gb]() mutable {
      const double* g = ot.grad_data();
      if (!g) return;
      // d cos / d a_i = b_i/(|a||b|) - cos * a_i/|a|^2
      if (ga) {
        double* da = at.grad().data();
        for (std::size_t i = 0; i < n; ++i) {
          da[i] += g[0] * (bt.at(i) / (na * nb) - cosv * at.at(i) / (na * na));
        }
      }
      if (gb) {
        double* db = bt.grad().data();
        for (std::size_t i = 0; i < n; ++i) {
          db[i] += g[0] * (at.at(i) / (na * nb) - cosv * bt.at(i) / (nb * nb));
        }
      }
    });
  }
  return out;
}

Tensor gradient_reverse(const Tensor& x) {
  Tensor out(x.shape());
  std::copy(x.data(), x.data() + x.numel(), out.data());
  if (grad_wanted(x)) {
    Tensor xt = x, ot = out;
    const std::size_t n = x.numel();
    track(out, [xt, ot, n]() mutable {
      const double* g = ot.grad_data();
      if (!g) return;
      double* dx = xt.grad().data();
      for (std::size_t i = 0; i < n; ++i) dx[i] -= g[i];
    });
  }
  return out;
}

Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids) {
  if (table.rank() != 2) throw DimensionError("embedding_rows expects [V,d]");
  if (ids.empty()) throw DimensionError("embedding_rows: empty id list");
  const int v = table.rows(), d = table.cols();
  for (int id : ids) {
    if (id < 0 || id >= v) {
      throw IndexError("embedding id " + std::to_string(id) + " outside [0," +
                       std::to_string(v) + ")");
    }
  }
  const int n = static_cast<int>(ids.size());
  Tensor out({n, d});
  for (int i = 0; i < n; ++i) {
    std::copy(table.data() + static_cast<std::size_t>(ids[i]) * d,
              table.data() + static_cast<std::size_t>(ids[i] + 1) * d,
              out.data() + static_cast<std::size_t>(i) * d);
  }
  if (grad_wanted(table)) {
    Tensor tt = table, ot = out;
    std::vector<int> idv = ids;
    track(out, [tt, ot, idv, d]() mutable {
      const double* g = ot.grad_data();
      if (!g) return;
      double* dt = tt.grad().data();
      for (std::size_t i = 0; i < idv.size(); ++i) {
        double* row = dt + static_cast<std::size_t>(idv[i]) * d;
        for (int j = 0; j < d; ++j) row[j] += g[i * d + j];
      }
    });
  }
  return out;
}

namespace {

// Transpose with gradient routing; used only inside attention.
Tensor transpose(const Tensor& x) {
  const int n = x.rows(), d = x.cols();
  Tensor out({d, n});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) out.data()[j * n + i] = x.at(i * d + j);
  }
  if (grad_wanted(x)) {
    Tensor xt = x, ot = out;
    track(out, [xt, ot, n, d]() mutable {
      const double* g = ot.grad_data();
      if (!g) return;
      double* dx = xt.grad().data();
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) dx[i * d + j] += g[j * n + i];
      }
    });
  }
  return out;
}

}  // namespace

Tensor attention(const Tensor& q_input, const Tensor& kv_input,
                 const AttentionParams& params, AttentionMask mask,
                 const std::vector<int>& key_keep) {
  if (q_input.rank() != 2 || kv_input.rank() != 2) {
    throw DimensionError("attention expects rank-2 inputs");
  }
  if (kv_input.cols() != q_input.cols()) {
    throw DimensionError("attention: query/key width mismatch");
  }
  if (!key_keep.empty() &&
      static_cast<int>(key_keep.size()) != kv_input.rows()) {
    throw DimensionError("attention: key mask length mismatch");
  }
  Tensor q = matmul(q_input, params.query_proj);
  Tensor k = matmul(kv_input, params.key_proj);
  Tensor v = matmul(kv_input, params.value_proj);

  const int nq = q.rows(), nk = k.rows();
  const int dk = params.key_proj.cols();
  Tensor scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(double(dk)));

  if (mask == AttentionMask::kCausal || !key_keep.empty()) {
    Tensor mask_add({nq, nk}, 0.0);
    for (int i = 0; i < nq; ++i) {
      for (int j = 0; j < nk; ++j) {
        bool blocked = false;
        if (mask == AttentionMask::kCausal && j > i) blocked = true;
        if (!key_keep.empty() && key_keep[j] == 0) blocked = true;
        if (blocked) mask_add.data()[i * nk + j] = kMaskedLogit;
      }
    }
    scores = add(scores, mask_add);
  }
  Tensor weights = softmax_rows(scores);
  return matmul(weights, v);
}

Tensor self_attention(const Tensor& x, const AttentionParams& params,
                      const std::vector<int>& key_keep) {
  return attention(x, x, params, AttentionMask::kNone, key_keep);
}

}  // namespace redkit
