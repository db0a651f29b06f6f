#ifndef PPGGLU_TENSOR_HPP
#define PPGGLU_TENSOR_HPP

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "ppgglu/errors.hpp"

namespace ppgglu {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

struct TensorData {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // sized like values when requires_grad
  bool requires_grad = false;
};

// Shared-ownership handle; copying a Tensor aliases the same storage.
class Tensor {
 public:
  Tensor() : d_(std::make_shared<TensorData>()) {}

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : d_(std::make_shared<TensorData>()) {
    if (shape_numel(shape) != values.size())
      throw ShapeMismatch("tensor " + shape_str(shape) + " cannot hold " +
                          std::to_string(values.size()) + " values");
    d_->shape = std::move(shape);
    d_->values = std::move(values);
    set_requires_grad(requires_grad);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<double> v(shape_numel(shape), 0.0);
    return Tensor(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    std::vector<double> v(shape_numel(shape), value);
    return Tensor(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return Tensor({1}, {value}, requires_grad);
  }

  const Shape& shape() const { return d_->shape; }
  std::size_t numel() const { return d_->values.size(); }
  std::size_t dim(std::size_t i) const { return d_->shape.at(i); }

  std::vector<double>& values() { return d_->values; }
  const std::vector<double>& values() const { return d_->values; }
  std::vector<double>& grad() { return d_->grad; }
  const std::vector<double>& grad() const { return d_->grad; }

  double& at(std::size_t i) { return d_->values[i]; }
  double at(std::size_t i) const { return d_->values[i]; }

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool rg) {
    d_->requires_grad = rg;
    d_->grad.assign(rg ? d_->values.size() : 0, 0.0);
  }

  void zero_grad() {
    if (d_->requires_grad) d_->grad.assign(d_->values.size(), 0.0);
  }

  bool same_storage(const Tensor& other) const { return d_ == other.d_; }

  std::shared_ptr<TensorData> data_ptr() const { return d_; }

 private:
  std::shared_ptr<TensorData> d_;
};

// Reverse-mode tape: ops append their backward closure during the forward
// pass; backward() replays them once, in reverse order. Gradients accumulate
// additively, so a tensor used twice receives the sum of both paths.
class Tape {
 public:
  void record(std::function<void()> backward_fn) {
    ops_.push_back(std::move(backward_fn));
  }

  void backward(Tensor& loss) {
    if (loss.numel() != 1)
      throw NotScalar("backward needs a scalar loss, got " + shape_str(loss.shape()));
    if (!loss.requires_grad())
      throw MissingGradient("loss does not participate in the tape");
    loss.grad()[0] += 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

  void clear() { ops_.clear(); }
  std::size_t size() const { return ops_.size(); }

 private:
  std::vector<std::function<void()>> ops_;
};

namespace detail {

// Tape==nullptr means pure forward evaluation: outputs carry no grad buffer
// and nothing is recorded.
inline Tensor make_output(Tape* tape, Shape shape, std::vector<double> values) {
  return Tensor(std::move(shape), std::move(values), tape != nullptr);
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeMismatch(std::string(op) + ": " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise arithmetic
// ---------------------------------------------------------------------------

inline Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  Tensor y = detail::make_output(tape, a.shape(), std::move(out));
  if (tape) {
    auto ad = a.data_ptr(), bd = b.data_ptr(), yd = y.data_ptr();
    tape->record([ad, bd, yd] {
      for (std::size_t i = 0; i < yd->grad.size(); ++i) {
        if (ad->requires_grad) ad->grad[i] += yd->grad[i];
        if (bd->requires_grad) bd->grad[i] += yd->grad[i];
      }
    });
  }
  return y;
}

inline Tensor sub(Tape* tape, const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  Tensor y = detail::make_output(tape, a.shape(), std::move(out));
  if (tape) {
    auto ad = a.data_ptr(), bd = b.data_ptr(), yd = y.data_ptr();
    tape->record([ad, bd, yd] {
      for (std::size_t i = 0; i < yd->grad.size(); ++i) {
        if (ad->requires_grad) ad->grad[i] += yd->grad[i];
        if (bd->requires_grad) bd->grad[i] -= yd->grad[i];
      }
    });
  }
  return y;
}

inline Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  Tensor y = detail::make_output(tape, a.shape(), std::move(out));
  if (tape) {
    auto ad = a.data_ptr(), bd = b.data_ptr(), yd = y.data_ptr();
    tape->record([ad, bd, yd] {
      for (std::size_t i = 0; i < yd->grad.size(); ++i) {
        if (ad->requires_grad) ad->grad[i] += yd->grad[i] * bd->values[i];
        if (bd->requires_grad) bd->grad[i] += yd->grad[i] * ad->values[i];
      }
    });
  }
  return y;
}

inline Tensor scale(Tape* tape, const Tensor& a, double c) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * c;
  Tensor y = detail::make_output(tape, a.shape(), std::move(out));
  if (tape) {
    auto ad = a.data_ptr();
    auto yd = y.data_ptr();
    tape->record([ad, yd, c] {
      if (!ad->requires_grad) return;
      for (std::size_t i = 0; i < yd->grad.size(); ++i)
        ad->grad[i] += yd->grad[i] * c;
    });
  }
  return y;
}

// y = 1 - x, used by GRU gating
inline Tensor one_minus(Tape* tape, const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 - a.at(i);
  Tensor y = detail::make_output(tape, a.shape(), std::move(out));
  if (tape) {
    auto ad = a.data_ptr();
    auto yd = y.data_ptr();
    tape->record([ad, yd] {
      if (!ad->requires_grad) return;
      for (std::size_t i = 0; i < yd->grad.size(); ++i)
        ad->grad[i] -= yd->grad[i];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// matmul / dense
// ---------------------------------------------------------------------------

inline Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2)
    throw ShapeMismatch("matmul needs 2-D operands, got " + shape_str(a.shape()) +
                        " and " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    throw ShapeMismatch("matmul inner dims " + std::to_string(k) + " vs " +
                        std::to_string(k2));
  std::vector<double> out(m * n, 0.0);
  {
    const double* A = a.values().data();
    const double* B = b.values().data();
    double* C = out.data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = A[i * k + p];
        const double* Brow = B + p * n;
        double* Crow = C + i * n;
        for (std::size_t j = 0; j < n; ++j) Crow[j] += aip * Brow[j];
      }
  }
  Tensor y = detail::make_output(tape, {m, n}, std::move(out));
  if (tape) {
    auto ad = a.data_ptr(), bd = b.data_ptr(), yd = y.data_ptr();
    tape->record([ad, bd, yd, m, k, n] {
      const double* dC = yd->grad.data();
      if (ad->requires_grad) {
        // dA = dC * B^T
        double* dA = ad->grad.data();
        const double* B = bd->values.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const double g = dC[i * n + j];
            const double* Brow = B;  // B[p*n + j] over p
            for (std::size_t p = 0; p < k; ++p) dA[i * k + p] += g * Brow[p * n + j];
          }
      }
      if (bd->requires_grad) {
        // dB = A^T * dC
        double* dB = bd->grad.data();
        const double* A = ad->values.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            const double* dCrow = dC + i * n;
            double* dBrow = dB + p * n;
            for (std::size_t j = 0; j < n; ++j) dBrow[j] += aip * dCrow[j];
          }
      }
    });
  }
  return y;
}

// rows of x each get +b ; x {batch, n}, b {n}
inline Tensor add_bias(Tape* tape, const Tensor& x, const Tensor& b) {
  if (x.shape().size() != 2 || b.shape().size() != 1 || x.dim(1) != b.dim(0))
    throw ShapeMismatch("add_bias: " + shape_str(x.shape()) + " + " +
                        shape_str(b.shape()));
  const std::size_t rows = x.dim(0), n = x.dim(1);
  std::vector<double> out(rows * n);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.at(i * n + j) + b.at(j);
  Tensor y = detail::make_output(tape, x.shape(), std::move(out));
  if (tape) {
    auto xd = x.data_ptr(), bdp = b.data_ptr(), yd = y.data_ptr();
    tape->record([xd, bdp, yd, rows, n] {
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double g = yd->grad[i * n + j];
          if (xd->requires_grad) xd->grad[i * n + j] += g;
          if (bdp->requires_grad) bdp->grad[j] += g;
        }
    });
  }
  return y;
}

// affine map x*W + b; x {batch, in}, W {in, out}, b {out}
inline Tensor dense(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_bias(tape, matmul(tape, x, w), b);
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

enum class Act { relu, sigmoid, tanh };

inline Tensor activation(Tape* tape, Act kind, const Tensor& x) {
  std::vector<double> out(x.numel());
  switch (kind) {
    case Act::relu:
      for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = x.at(i) > 0.0 ? x.at(i) : 0.0;
      break;
    case Act::sigmoid:
      for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = 1.0 / (1.0 + std::exp(-x.at(i)));
      break;
    case Act::tanh:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.at(i));
      break;
  }
  Tensor y = detail::make_output(tape, x.shape(), std::move(out));
  if (tape) {
    auto xd = x.data_ptr();
    auto yd = y.data_ptr();
    tape->record([xd, yd, kind] {
      if (!xd->requires_grad) return;
      for (std::size_t i = 0; i < yd->grad.size(); ++i) {
        const double g = yd->grad[i];
        const double v = yd->values[i];
        switch (kind) {
          case Act::relu:
            xd->grad[i] += xd->values[i] > 0.0 ? g : 0.0;
            break;
          case Act::sigmoid:
            xd->grad[i] += g * v * (1.0 - v);
            break;
          case Act::tanh:
            xd->grad[i] += g * (1.0 - v * v);
            break;
        }
      }
    });
  }
  return y;
}

inline Tensor relu(Tape* t, const Tensor& x) { return activation(t, Act::relu, x); }
inline Tensor sigmoid(Tape* t, const Tensor& x) { return activation(t, Act::sigmoid, x); }
inline Tensor tanh_act(Tape* t, const Tensor& x) { return activation(t, Act::tanh, x); }

// ---------------------------------------------------------------------------
// conv1d / maxpool1d
// ---------------------------------------------------------------------------

// Cross-correlation with zero same-padding (k odd), stride 1.
// x {c_in, len}, kernels {c_out, c_in, k}, bias {c_out} -> {c_out, len}
inline Tensor conv1d(Tape* tape, const Tensor& x, const Tensor& kernels,
                     const Tensor& bias) {
  if (x.shape().size() != 2 || kernels.shape().size() != 3 ||
      bias.shape().size() != 1)
    throw ShapeMismatch("conv1d: ranks " + shape_str(x.shape()) + ", " +
                        shape_str(kernels.shape()) + ", " + shape_str(bias.shape()));
  const std::size_t cin = x.dim(0), len = x.dim(1);
  const std::size_t cout = kernels.dim(0), k = kernels.dim(2);
  if (kernels.dim(1) != cin)
    throw ShapeMismatch("conv1d: input channels " + std::to_string(cin) +
                        " vs kernel channels " + std::to_string(kernels.dim(1)));
  if (bias.dim(0) != cout)
    throw ShapeMismatch("conv1d: bias length " + std::to_string(bias.dim(0)) +
                        " vs " + std::to_string(cout) + " output channels");
  if (k % 2 == 0) throw InvalidKernel("conv1d kernel width must be odd, got " +
                                      std::to_string(k));
  if (len < 1) throw InvalidInput("conv1d: empty signal");

  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((k - 1) / 2);
  std::vector<double> out(cout * len);
  const double* X = x.values().data();
  const double* K = kernels.values().data();
  for (std::size_t co = 0; co < cout; ++co) {
    for (std::size_t t = 0; t < len; ++t) {
      double acc = bias.at(co);
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* Kr = K + (co * cin + ci) * k;
        const double* Xr = X + ci * len;
        for (std::size_t j = 0; j < k; ++j) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - pad;
          if (src >= 0 && src < static_cast<std::ptrdiff_t>(len))
            acc += Kr[j] * Xr[src];
        }
      }
      out[co * len + t] = acc;
    }
  }
  Tensor y = detail::make_output(tape, {cout, len}, std::move(out));
  if (tape) {
    auto xd = x.data_ptr(), kd = kernels.data_ptr(), bd = bias.data_ptr(),
         yd = y.data_ptr();
    tape->record([xd, kd, bd, yd, cin, cout, len, k, pad] {
      for (std::size_t co = 0; co < cout; ++co) {
        for (std::size_t t = 0; t < len; ++t) {
          const double g = yd->grad[co * len + t];
          if (g == 0.0) continue;
          if (bd->requires_grad) bd->grad[co] += g;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            for (std::size_t j = 0; j < k; ++j) {
              const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - pad;
              if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
              const std::size_t ki = (co * cin + ci) * k + j;
              const std::size_t xi = ci * len + static_cast<std::size_t>(src);
              if (kd->requires_grad) kd->grad[ki] += g * xd->values[xi];
              if (xd->requires_grad) xd->grad[xi] += g * kd->values[ki];
            }
          }
        }
      }
    });
  }
  return y;
}

// Non-overlapping window-2 stride-2 max; trailing odd element dropped.
// Backward routes to the argmax, first index on ties.
inline Tensor maxpool1d(Tape* tape, const Tensor& x) {
  if (x.shape().size() != 2)
    throw ShapeMismatch("maxpool1d needs {channels, len}, got " +
                        shape_str(x.shape()));
  const std::size_t ch = x.dim(0), len = x.dim(1);
  if (len < 2) throw InvalidInput("maxpool1d: signal length " +
                                  std::to_string(len) + " < 2");
  const std::size_t olen = len / 2;
  std::vector<double> out(ch * olen);
  auto argmax = std::make_shared<std::vector<std::size_t>>(ch * olen);
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t t = 0; t < olen; ++t) {
      const std::size_t i0 = c * len + 2 * t;
      const std::size_t best = x.at(i0) >= x.at(i0 + 1) ? i0 : i0 + 1;
      (*argmax)[c * olen + t] = best;
      out[c * olen + t] = x.at(best);
    }
  }
  Tensor y = detail::make_output(tape, {ch, olen}, std::move(out));
  if (tape) {
    auto xd = x.data_ptr();
    auto yd = y.data_ptr();
    tape->record([xd, yd, argmax] {
      if (!xd->requires_grad) return;
      for (std::size_t i = 0; i < yd->grad.size(); ++i)
        xd->grad[(*argmax)[i]] += yd->grad[i];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// batch normalization
// ---------------------------------------------------------------------------

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;

  explicit BatchNormState(std::size_t features = 0)
      : running_mean(features, 0.0), running_var(features, 1.0) {}
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// x {batch, features}; train mode uses batch statistics and updates the
// running stats, eval mode reads the running stats.
inline Tensor batchnorm1d(Tape* tape, const Tensor& x, const Tensor& gamma,
                          const Tensor& beta, BatchNormState& state, bool train) {
  if (x.shape().size() != 2)
    throw ShapeMismatch("batchnorm1d needs {batch, features}, got " +
                        shape_str(x.shape()));
  const std::size_t batch = x.dim(0), f = x.dim(1);
  if (gamma.shape() != Shape{f} || beta.shape() != Shape{f})
    throw ShapeMismatch("batchnorm1d: gamma/beta must be [" + std::to_string(f) + "]");
  if (state.running_mean.size() != f)
    throw ShapeMismatch("batchnorm1d: state sized for " +
                        std::to_string(state.running_mean.size()) + " features");
  if (train && batch < 2)
    throw InvalidBatch("batchnorm1d train mode needs batch >= 2, got " +
                       std::to_string(batch));

  std::vector<double> mean(f, 0.0), var(f, 0.0);
  if (train) {
    for (std::size_t i = 0; i < batch; ++i)
      for (std::size_t j = 0; j < f; ++j) mean[j] += x.at(i * f + j);
    for (std::size_t j = 0; j < f; ++j) mean[j] /= static_cast<double>(batch);
    for (std::size_t i = 0; i < batch; ++i)
      for (std::size_t j = 0; j < f; ++j) {
        const double d = x.at(i * f + j) - mean[j];
        var[j] += d * d;
      }
    for (std::size_t j = 0; j < f; ++j) var[j] /= static_cast<double>(batch);
    for (std::size_t j = 0; j < f; ++j) {
      state.running_mean[j] = (1.0 - kBatchNormMomentum) * state.running_mean[j] +
                              kBatchNormMomentum * mean[j];
      state.running_var[j] = (1.0 - kBatchNormMomentum) * state.running_var[j] +
                             kBatchNormMomentum * var[j];
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }

  auto invstd = std::make_shared<std::vector<double>>(f);
  for (std::size_t j = 0; j < f; ++j)
    (*invstd)[j] = 1.0 / std::sqrt(var[j] + kBatchNormEps);

  auto xhat = std::make_shared<std::vector<double>>(batch * f);
  std::vector<double> out(batch * f);
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t j = 0; j < f; ++j) {
      const double xh = (x.at(i * f + j) - mean[j]) * (*invstd)[j];
      (*xhat)[i * f + j] = xh;
      out[i * f + j] = gamma.at(j) * xh + beta.at(j);
    }
  Tensor y = detail::make_output(tape, x.shape(), std::move(out));
  if (tape) {
    auto xd = x.data_ptr(), gd = gamma.data_ptr(), bd = beta.data_ptr(),
         yd = y.data_ptr();
    tape->record([xd, gd, bd, yd, xhat, invstd, batch, f, train] {
      const double nb = static_cast<double>(batch);
      for (std::size_t j = 0; j < f; ++j) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t i = 0; i < batch; ++i) {
          const double g = yd->grad[i * f + j];
          sum_dy += g;
          sum_dy_xhat += g * (*xhat)[i * f + j];
        }
        if (gd->requires_grad) gd->grad[j] += sum_dy_xhat;
        if (bd->requires_grad) bd->grad[j] += sum_dy;
        if (!xd->requires_grad) continue;
        const double gam = gd->values[j];
        if (train) {
          for (std::size_t i = 0; i < batch; ++i) {
            const double g = yd->grad[i * f + j];
            xd->grad[i * f + j] +=
                gam * (*invstd)[j] *
                (g - sum_dy / nb - (*xhat)[i * f + j] * sum_dy_xhat / nb);
          }
        } else {
          for (std::size_t i = 0; i < batch; ++i)
            xd->grad[i * f + j] += gam * (*invstd)[j] * yd->grad[i * f + j];
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// shape plumbing
// ---------------------------------------------------------------------------

inline Tensor reshape(Tape* tape, const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw ShapeMismatch("reshape " + shape_str(x.shape()) + " -> " +
                        shape_str(shape));
  Tensor y = detail::make_output(tape, std::move(shape), x.values());
  if (tape) {
    auto xd = x.data_ptr();
    auto yd = y.data_ptr();
    tape->record([xd, yd] {
      if (!xd->requires_grad) return;
      for (std::size_t i = 0; i < yd->grad.size(); ++i) xd->grad[i] += yd->grad[i];
    });
  }
  return y;
}

// column-wise concatenation of {batch, n_i} blocks
inline Tensor concat_cols(Tape* tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw EmptyInput("concat_cols: no inputs");
  const std::size_t batch = parts[0].dim(0);
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.shape().size() != 2 || p.dim(0) != batch)
      throw ShapeMismatch("concat_cols: inconsistent batch dims");
    total += p.dim(1);
  }
  std::vector<double> out(batch * total);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t n = p.dim(1);
    for (std::size_t i = 0; i < batch; ++i)
      for (std::size_t j = 0; j < n; ++j) out[i * total + off + j] = p.at(i * n + j);
    off += n;
  }
  Tensor y = detail::make_output(tape, {batch, total}, std::move(out));
  if (tape) {
    std::vector<std::shared_ptr<TensorData>> srcs;
    for (const auto& p : parts) srcs.push_back(p.data_ptr());
    auto yd = y.data_ptr();
    tape->record([srcs, yd, batch, total] {
      std::size_t off2 = 0;
      for (const auto& sd : srcs) {
        const std::size_t n = sd->shape[1];
        if (sd->requires_grad)
          for (std::size_t i = 0; i < batch; ++i)
            for (std::size_t j = 0; j < n; ++j)
              sd->grad[i * n + j] += yd->grad[i * total + off2 + j];
        off2 += n;
      }
    });
  }
  return y;
}

// stack per-sample vectors into a {batch, n} matrix
inline Tensor stack_rows(Tape* tape, const std::vector<Tensor>& rows) {
  if (rows.empty()) throw EmptyInput("stack_rows: no inputs");
  const std::size_t n = rows[0].numel();
  std::vector<double> out;
  out.reserve(rows.size() * n);
  for (const auto& r : rows) {
    if (r.numel() != n) throw ShapeMismatch("stack_rows: ragged inputs");
    out.insert(out.end(), r.values().begin(), r.values().end());
  }
  Tensor y = detail::make_output(tape, {rows.size(), n}, std::move(out));
  if (tape) {
    std::vector<std::shared_ptr<TensorData>> srcs;
    for (const auto& r : rows) srcs.push_back(r.data_ptr());
    auto yd = y.data_ptr();
    tape->record([srcs, yd, n] {
      for (std::size_t b = 0; b < srcs.size(); ++b) {
        if (!srcs[b]->requires_grad) continue;
        for (std::size_t j = 0; j < n; ++j)
          srcs[b]->grad[j] += yd->grad[b * n + j];
      }
    });
  }
  return y;
}

// per-sample conv outputs {C, L} packed as {B*L, C}; row b*L+t holds the C
// channel values at time t of sample b, the layout batchnorm1d expects for
// per-channel statistics over batch and time
inline Tensor pack_channels(Tape* tape, const std::vector<Tensor>& samples) {
  if (samples.empty()) throw EmptyInput("pack_channels: no inputs");
  const std::size_t c = samples[0].dim(0), len = samples[0].dim(1);
  std::vector<double> out(samples.size() * len * c);
  for (std::size_t b = 0; b < samples.size(); ++b) {
    const auto& s = samples[b];
    if (s.shape() != Shape{c, len}) throw ShapeMismatch("pack_channels: ragged inputs");
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t t = 0; t < len; ++t)
        out[(b * len + t) * c + ch] = s.at(ch * len + t);
  }
  Tensor y = detail::make_output(tape, {samples.size() * len, c}, std::move(out));
  if (tape) {
    std::vector<std::shared_ptr<TensorData>> srcs;
    for (const auto& s : samples) srcs.push_back(s.data_ptr());
    auto yd = y.data_ptr();
    tape->record([srcs, yd, c, len] {
      for (std::size_t b = 0; b < srcs.size(); ++b) {
        if (!srcs[b]->requires_grad) continue;
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t t = 0; t < len; ++t)
            srcs[b]->grad[ch * len + t] += yd->grad[(b * len + t) * c + ch];
      }
    });
  }
  return y;
}

// inverse of pack_channels for one sample: {B*L, C} -> {C, L}
inline Tensor unpack_channels(Tape* tape, const Tensor& packed, std::size_t b,
                              std::size_t len) {
  const std::size_t c = packed.dim(1);
  if ((b + 1) * len > packed.dim(0))
    throw ShapeMismatch("unpack_channels: sample out of range");
  std::vector<double> out(c * len);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t t = 0; t < len; ++t)
      out[ch * len + t] = packed.at((b * len + t) * c + ch);
  Tensor y = detail::make_output(tape, {c, len}, std::move(out));
  if (tape) {
    auto pd = packed.data_ptr();
    auto yd = y.data_ptr();
    tape->record([pd, yd, b, c, len] {
      if (!pd->requires_grad) return;
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t t = 0; t < len; ++t)
          pd->grad[(b * len + t) * c + ch] += yd->grad[ch * len + t];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// reductions / losses
// ---------------------------------------------------------------------------

inline Tensor sum(Tape* tape, const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  Tensor y = detail::make_output(tape, {1}, {acc});
  if (tape) {
    auto xd = x.data_ptr();
    auto yd = y.data_ptr();
    tape->record([xd, yd] {
      if (!xd->requires_grad) return;
      for (std::size_t i = 0; i < xd->grad.size(); ++i) xd->grad[i] += yd->grad[0];
    });
  }
  return y;
}

inline Tensor mse_loss(Tape* tape, const Tensor& pred, const Tensor& target) {
  if (pred.numel() == 0) throw EmptyInput("mse_loss: empty prediction");
  if (pred.numel() != target.numel())
    throw ShapeMismatch("mse_loss: " + std::to_string(pred.numel()) + " vs " +
                        std::to_string(target.numel()) + " elements");
  const std::size_t n = pred.numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = pred.at(i) - target.at(i);
    acc += e * e;
  }
  Tensor y = detail::make_output(tape, {1}, {acc / static_cast<double>(n)});
  if (tape) {
    auto pd = pred.data_ptr(), td = target.data_ptr(), yd = y.data_ptr();
    tape->record([pd, td, yd, n] {
      const double g = yd->grad[0] * 2.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double e = pd->values[i] - td->values[i];
        if (pd->requires_grad) pd->grad[i] += g * e;
        if (td->requires_grad) td->grad[i] -= g * e;
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// GRU step
// ---------------------------------------------------------------------------

struct GruParams {
  // input-to-hidden {in, hidden}, hidden-to-hidden {hidden, hidden},
  // biases {hidden}, for the update (z), reset (r) and candidate (n) gates
  Tensor w_z, w_r, w_n;
  Tensor u_z, u_r, u_n;
  Tensor b_z, b_r, b_n;

  std::vector<Tensor*> parameters() {
    return {&w_z, &w_r, &w_n, &u_z, &u_r, &u_n, &b_z, &b_r, &b_n};
  }
};

// z = sigma(x W_z + h U_z + b_z); r = sigma(x W_r + h U_r + b_r)
// n = tanh(x W_n + r .* (h U_n) + b_n); h' = (1-z) .* n + z .* h
// x {batch, in}, h {batch, hidden} -> {batch, hidden}
inline Tensor gru_step(Tape* tape, const Tensor& x, const Tensor& h_prev,
                       GruParams& p) {
  const Tensor z = sigmoid(
      tape, add_bias(tape, add(tape, matmul(tape, x, p.w_z), matmul(tape, h_prev, p.u_z)),
                     p.b_z));
  const Tensor r = sigmoid(
      tape, add_bias(tape, add(tape, matmul(tape, x, p.w_r), matmul(tape, h_prev, p.u_r)),
                     p.b_r));
  const Tensor n = tanh_act(
      tape,
      add_bias(tape,
               add(tape, matmul(tape, x, p.w_n), mul(tape, r, matmul(tape, h_prev, p.u_n))),
               p.b_n));
  return add(tape, mul(tape, one_minus(tape, z), n), mul(tape, z, h_prev));
}

}  // namespace ppgglu

#endif  // PPGGLU_TENSOR_HPP
