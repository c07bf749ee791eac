#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "tarmac/core/tensor.hpp"

// Differentiable ops over rank-1/2 tensors. Every op computes its value
// eagerly and, when gradients are enabled and some input requires them,
// records a backward closure on the tape. Broadcasting is restricted to
// add_bias over the leading batch dimension; everything else is exact-shape.

namespace tarmac {

namespace detail {

// C[m x n] += A[m x k] * B[k x n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* ai = a + static_cast<size_t>(i) * k;
    T* ci = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const T av = ai[p];
      if (av == T(0)) continue;
      const T* bp = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[m x n] += A[m x k] * B[n x k]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* ai = a + static_cast<size_t>(i) * k;
    T* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const T* bj = b + static_cast<size_t>(j) * k;
      T acc = T(0);
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

// C[k x n] += A[m x k]^T * B[m x n]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* ai = a + static_cast<size_t>(i) * k;
    const T* bi = b + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const T av = ai[p];
      if (av == T(0)) continue;
      T* cp = c + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw TensorError(msg);
}

template <typename T>
bool wants_grad(const Tensor<T>& t) {
  return t.tape()->grad_enabled() && t.requires_grad();
}

}  // namespace detail

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const int m = a.rows(), k = a.cols(), n = b.cols();
  detail::require(b.rows() == k, "matmul: inner dims disagree " + shape_str(a.shape()) +
                                     " vs " + shape_str(b.shape()));
  Tape<T>* tp = a.tape();
  const bool rg = detail::wants_grad(a) || detail::wants_grad(b);
  Tensor<T> out = tp->alloc({m, n}, rg);
  detail::gemm_nn(a.value().data(), b.value().data(), out.value().data(), m, k, n);
  if (rg) {
    auto* ad = a.data();
    auto* bd = b.data();
    auto* od = out.data();
    tp->record([ad, bd, od, m, k, n] {
      if (ad->requires_grad)
        detail::gemm_nt(od->grad.data(), bd->value.data(), ad->grad.data(), m, n, k);
      if (bd->requires_grad)
        detail::gemm_tn(ad->value.data(), od->grad.data(), bd->grad.data(), m, k, n);
    });
  }
  return out;
}

// a * b^T, with b given row-major as [n x k].
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  const int m = a.rows(), k = a.cols(), n = b.rows();
  detail::require(b.cols() == k, "matmul_nt: inner dims disagree " + shape_str(a.shape()) +
                                     " vs " + shape_str(b.shape()));
  Tape<T>* tp = a.tape();
  const bool rg = detail::wants_grad(a) || detail::wants_grad(b);
  Tensor<T> out = tp->alloc({m, n}, rg);
  detail::gemm_nt(a.value().data(), b.value().data(), out.value().data(), m, k, n);
  if (rg) {
    auto* ad = a.data();
    auto* bd = b.data();
    auto* od = out.data();
    tp->record([ad, bd, od, m, k, n] {
      if (ad->requires_grad)
        detail::gemm_nn(od->grad.data(), bd->value.data(), ad->grad.data(), m, n, k);
      if (bd->requires_grad)
        detail::gemm_tn(od->grad.data(), ad->value.data(), bd->grad.data(), m, n, k);
    });
  }
  return out;
}

namespace detail {

template <typename T, typename Fwd, typename Bwd>
Tensor<T> binary_ew(const Tensor<T>& a, const Tensor<T>& b, Fwd fwd, Bwd bwd,
                    const char* name) {
  require(a.shape() == b.shape(), std::string(name) + ": shape mismatch " +
                                      shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tape<T>* tp = a.tape();
  const bool rg = wants_grad(a) || wants_grad(b);
  Tensor<T> out = tp->alloc(a.shape(), rg);
  const size_t n = a.value().size();
  for (size_t i = 0; i < n; ++i) out.value()[i] = fwd(a.value()[i], b.value()[i]);
  if (rg) {
    auto* ad = a.data();
    auto* bd = b.data();
    auto* od = out.data();
    tp->record([ad, bd, od, n, bwd] {
      for (size_t i = 0; i < n; ++i) bwd(od->grad[i], ad, bd, i);
    });
  }
  return out;
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_ew(
      a, b, [](T x, T y) { return x + y; },
      [](T g, TensorData<T>* ad, TensorData<T>* bd, size_t i) {
        if (ad->requires_grad) ad->grad[i] += g;
        if (bd->requires_grad) bd->grad[i] += g;
      },
      "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_ew(
      a, b, [](T x, T y) { return x - y; },
      [](T g, TensorData<T>* ad, TensorData<T>* bd, size_t i) {
        if (ad->requires_grad) ad->grad[i] += g;
        if (bd->requires_grad) bd->grad[i] -= g;
      },
      "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_ew(
      a, b, [](T x, T y) { return x * y; },
      [](T g, TensorData<T>* ad, TensorData<T>* bd, size_t i) {
        if (ad->requires_grad) ad->grad[i] += g * bd->value[i];
        if (bd->requires_grad) bd->grad[i] += g * ad->value[i];
      },
      "mul");
}

namespace detail {

template <typename T, typename Fwd, typename Bwd>
Tensor<T> unary_ew(const Tensor<T>& x, Fwd fwd, Bwd bwd) {
  Tape<T>* tp = x.tape();
  const bool rg = wants_grad(x);
  Tensor<T> out = tp->alloc(x.shape(), rg);
  const size_t n = x.value().size();
  for (size_t i = 0; i < n; ++i) out.value()[i] = fwd(x.value()[i]);
  if (rg) {
    auto* xd = x.data();
    auto* od = out.data();
    tp->record([xd, od, n, bwd] {
      for (size_t i = 0; i < n; ++i) xd->grad[i] += od->grad[i] * bwd(xd->value[i], od->value[i]);
    });
  }
  return out;
}

}  // namespace detail

template <typename T>
Tensor<T> tanh_op(const Tensor<T>& x) {
  return detail::unary_ew(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary_ew(
      x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary_ew(
      x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> log_op(const Tensor<T>& x) {
  for (T v : x.value())
    detail::require(v > T(0), "log: non-positive operand");
  return detail::unary_ew(
      x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Tensor<T> exp_op(const Tensor<T>& x) {
  return detail::unary_ew(
      x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
  return detail::unary_ew(
      x, [c](T v) { return c * v; }, [c](T, T) { return c; });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  return scale(x, T(-1));
}

// Elementwise multiply by a constant buffer (no gradient to the constant).
template <typename T>
Tensor<T> mul_const(const Tensor<T>& x, const std::vector<T>& w) {
  detail::require(w.size() == x.value().size(), "mul_const: size mismatch");
  Tape<T>* tp = x.tape();
  const bool rg = detail::wants_grad(x);
  Tensor<T> out = tp->alloc(x.shape(), rg);
  for (size_t i = 0; i < w.size(); ++i) out.value()[i] = x.value()[i] * w[i];
  if (rg) {
    auto* xd = x.data();
    auto* od = out.data();
    auto wc = w;
    tp->record([xd, od, wc = std::move(wc)] {
      for (size_t i = 0; i < wc.size(); ++i) xd->grad[i] += od->grad[i] * wc[i];
    });
  }
  return out;
}

// Scales each row i of x by mask[i]; used to zero recurrent state at episode
// boundaries (gradient is cut by the same mask, which is the intent).
template <typename T>
Tensor<T> mul_rowmask(const Tensor<T>& x, const std::vector<T>& mask) {
  const int m = x.rows(), n = x.cols();
  detail::require(static_cast<int>(mask.size()) == m, "mul_rowmask: mask size mismatch");
  Tape<T>* tp = x.tape();
  const bool rg = detail::wants_grad(x);
  Tensor<T> out = tp->alloc(x.shape(), rg);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out.value()[static_cast<size_t>(i) * n + j] = x.value()[static_cast<size_t>(i) * n + j] * mask[i];
  if (rg) {
    auto* xd = x.data();
    auto* od = out.data();
    auto mc = mask;
    tp->record([xd, od, m, n, mc = std::move(mc)] {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          xd->grad[static_cast<size_t>(i) * n + j] += od->grad[static_cast<size_t>(i) * n + j] * mc[i];
    });
  }
  return out;
}

// x[m x n] + bias[n], broadcast over the leading dimension.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  const int m = x.rows(), n = x.cols();
  detail::require(bias.size() == n, "add_bias: bias width mismatch " + shape_str(x.shape()) +
                                        " vs " + shape_str(bias.shape()));
  Tape<T>* tp = x.tape();
  const bool rg = detail::wants_grad(x) || detail::wants_grad(bias);
  Tensor<T> out = tp->alloc(x.shape(), rg);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out.value()[static_cast<size_t>(i) * n + j] = x.value()[static_cast<size_t>(i) * n + j] + bias.value()[j];
  if (rg) {
    auto* xd = x.data();
    auto* bd = bias.data();
    auto* od = out.data();
    tp->record([xd, bd, od, m, n] {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const T g = od->grad[static_cast<size_t>(i) * n + j];
          if (xd->requires_grad) xd->grad[static_cast<size_t>(i) * n + j] += g;
          if (bd->requires_grad) bd->grad[j] += g;
        }
    });
  }
  return out;
}

// Adds a constant row vector to every row (attention masking).
template <typename T>
Tensor<T> add_rowvec_const(const Tensor<T>& x, const std::vector<T>& v) {
  const int m = x.rows(), n = x.cols();
  detail::require(static_cast<int>(v.size()) == n, "add_rowvec_const: width mismatch");
  Tape<T>* tp = x.tape();
  const bool rg = detail::wants_grad(x);
  Tensor<T> out = tp->alloc(x.shape(), rg);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out.value()[static_cast<size_t>(i) * n + j] = x.value()[static_cast<size_t>(i) * n + j] + v[j];
  if (rg) {
    auto* xd = x.data();
    auto* od = out.data();
    tp->record([xd, od] {
      for (size_t i = 0; i < xd->grad.size(); ++i) xd->grad[i] += od->grad[i];
    });
  }
  return out;
}

// Adds a constant buffer elementwise (per-receiver attention masks).
template <typename T>
Tensor<T> add_const(const Tensor<T>& x, const std::vector<T>& v) {
  detail::require(v.size() == x.value().size(), "add_const: size mismatch");
  Tape<T>* tp = x.tape();
  const bool rg = detail::wants_grad(x);
  Tensor<T> out = tp->alloc(x.shape(), rg);
  for (size_t i = 0; i < v.size(); ++i) out.value()[i] = x.value()[i] + v[i];
  if (rg) {
    auto* xd = x.data();
    auto* od = out.data();
    tp->record([xd, od] {
      for (size_t i = 0; i < xd->grad.size(); ++i) xd->grad[i] += od->grad[i];
    });
  }
  return out;
}

// Numerically stable row softmax of scale*x. Masked entries should already
// carry a -1e9 logit; max subtraction then underflows them to exact zero.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, T sc = T(1)) {
  detail::require(sc > T(0), "softmax: scale must be positive");
  const int m = x.rows(), n = x.cols();
  Tape<T>* tp = x.tape();
  const bool rg = detail::wants_grad(x);
  Tensor<T> out = tp->alloc(x.shape(), rg);
  for (int i = 0; i < m; ++i) {
    const T* xi = x.value().data() + static_cast<size_t>(i) * n;
    T* yi = out.value().data() + static_cast<size_t>(i) * n;
    T mx = xi[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
    T sum = T(0);
    for (int j = 0; j < n; ++j) {
      yi[j] = std::exp(sc * (xi[j] - mx));
      sum += yi[j];
    }
    for (int j = 0; j < n; ++j) yi[j] /= sum;
  }
  if (rg) {
    auto* xd = x.data();
    auto* od = out.data();
    tp->record([xd, od, m, n, sc] {
      for (int i = 0; i < m; ++i) {
        const T* y = od->value.data() + static_cast<size_t>(i) * n;
        const T* g = od->grad.data() + static_cast<size_t>(i) * n;
        T dot = T(0);
        for (int j = 0; j < n; ++j) dot += g[j] * y[j];
        T* gx = xd->grad.data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) gx[j] += sc * y[j] * (g[j] - dot);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x) {
  const int m = x.rows(), n = x.cols();
  Tape<T>* tp = x.tape();
  const bool rg = detail::wants_grad(x);
  Tensor<T> out = tp->alloc(x.shape(), rg);
  for (int i = 0; i < m; ++i) {
    const T* xi = x.value().data() + static_cast<size_t>(i) * n;
    T* yi = out.value().data() + static_cast<size_t>(i) * n;
    T mx = xi[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
    T sum = T(0);
    for (int j = 0; j < n; ++j) sum += std::exp(xi[j] - mx);
    const T lse = mx + std::log(sum);
    for (int j = 0; j < n; ++j) yi[j] = xi[j] - lse;
  }
  if (rg) {
    auto* xd = x.data();
    auto* od = out.data();
    tp->record([xd, od, m, n] {
      for (int i = 0; i < m; ++i) {
        const T* y = od->value.data() + static_cast<size_t>(i) * n;
        const T* g = od->grad.data() + static_cast<size_t>(i) * n;
        T gsum = T(0);
        for (int j = 0; j < n; ++j) gsum += g[j];
        T* gx = xd->grad.data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) gx[j] += g[j] - std::exp(y[j]) * gsum;
      }
    });
  }
  return out;
}

// out[i] = x[i, idx[i]], as an [m x 1] column.
template <typename T>
Tensor<T> gather_cols(const Tensor<T>& x, const std::vector<int>& idx) {
  const int m = x.rows(), n = x.cols();
  detail::require(static_cast<int>(idx.size()) == m, "gather_cols: index count mismatch");
  for (int i : idx) detail::require(i >= 0 && i < n, "gather_cols: index out of range");
  Tape<T>* tp = x.tape();
  const bool rg = detail::wants_grad(x);
  Tensor<T> out = tp->alloc({m, 1}, rg);
  for (int i = 0; i < m; ++i) out.value()[i] = x.value()[static_cast<size_t>(i) * n + idx[i]];
  if (rg) {
    auto* xd = x.data();
    auto* od = out.data();
    auto ic = idx;
    tp->record([xd, od, n, ic = std::move(ic)] {
      for (size_t i = 0; i < ic.size(); ++i) xd->grad[i * n + ic[i]] += od->grad[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> row_sum(const Tensor<T>& x) {
  const int m = x.rows(), n = x.cols();
  Tape<T>* tp = x.tape();
  const bool rg = detail::wants_grad(x);
  Tensor<T> out = tp->alloc({m, 1}, rg);
  for (int i = 0; i < m; ++i) {
    T acc = T(0);
    for (int j = 0; j < n; ++j) acc += x.value()[static_cast<size_t>(i) * n + j];
    out.value()[i] = acc;
  }
  if (rg) {
    auto* xd = x.data();
    auto* od = out.data();
    tp->record([xd, od, m, n] {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) xd->grad[static_cast<size_t>(i) * n + j] += od->grad[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  Tape<T>* tp = x.tape();
  const bool rg = detail::wants_grad(x);
  Tensor<T> out = tp->alloc({1, 1}, rg);
  T acc = T(0);
  for (T v : x.value()) acc += v;
  out.value()[0] = acc;
  if (rg) {
    auto* xd = x.data();
    auto* od = out.data();
    tp->record([xd, od] {
      for (T& g : xd->grad) g += od->grad[0];
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

// Copy of rows [r0, r1) as a new tensor; gradient adds back into the slice.
template <typename T>
Tensor<T> rows(const Tensor<T>& x, int r0, int r1) {
  const int m = x.rows(), n = x.cols();
  detail::require(0 <= r0 && r0 < r1 && r1 <= m, "rows: bad range");
  Tape<T>* tp = x.tape();
  const bool rg = detail::wants_grad(x);
  Tensor<T> out = tp->alloc({r1 - r0, n}, rg);
  std::copy(x.value().begin() + static_cast<size_t>(r0) * n,
            x.value().begin() + static_cast<size_t>(r1) * n, out.value().begin());
  if (rg) {
    auto* xd = x.data();
    auto* od = out.data();
    tp->record([xd, od, r0, n] {
      for (size_t i = 0; i < od->grad.size(); ++i)
        xd->grad[static_cast<size_t>(r0) * n + i] += od->grad[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  detail::require(!parts.empty(), "concat_cols: empty input");
  const int m = parts[0].rows();
  int total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    detail::require(p.rows() == m, "concat_cols: row mismatch");
    total += p.cols();
    rg = rg || detail::wants_grad(p);
  }
  Tape<T>* tp = parts[0].tape();
  Tensor<T> out = tp->alloc({m, total}, rg);
  int off = 0;
  for (const auto& p : parts) {
    const int n = p.cols();
    for (int i = 0; i < m; ++i)
      std::copy(p.value().begin() + static_cast<size_t>(i) * n,
                p.value().begin() + static_cast<size_t>(i) * n + n,
                out.value().begin() + static_cast<size_t>(i) * total + off);
    off += n;
  }
  if (rg) {
    std::vector<TensorData<T>*> pd;
    for (const auto& p : parts) pd.push_back(p.data());
    auto* od = out.data();
    tp->record([pd = std::move(pd), od, m, total] {
      int off2 = 0;
      for (auto* d : pd) {
        const int n = d->cols();
        if (d->requires_grad)
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
              d->grad[static_cast<size_t>(i) * n + j] +=
                  od->grad[static_cast<size_t>(i) * total + off2 + j];
        off2 += n;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
  return concat_cols(std::vector<Tensor<T>>{a, b});
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  detail::require(!parts.empty(), "concat_rows: empty input");
  const int n = parts[0].cols();
  int total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    detail::require(p.cols() == n, "concat_rows: column mismatch");
    total += p.rows();
    rg = rg || detail::wants_grad(p);
  }
  Tape<T>* tp = parts[0].tape();
  Tensor<T> out = tp->alloc({total, n}, rg);
  size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().begin(), p.value().end(), out.value().begin() + off);
    off += p.value().size();
  }
  if (rg) {
    std::vector<TensorData<T>*> pd;
    for (const auto& p : parts) pd.push_back(p.data());
    auto* od = out.data();
    tp->record([pd = std::move(pd), od] {
      size_t off2 = 0;
      for (auto* d : pd) {
        if (d->requires_grad)
          for (size_t i = 0; i < d->grad.size(); ++i) d->grad[i] += od->grad[off2 + i];
        off2 += d->value.size();
      }
    });
  }
  return out;
}

// log P(bit | Bernoulli(sigmoid(logit))), stable at extreme logits.
template <typename T>
Tensor<T> bernoulli_log_prob(const Tensor<T>& logits, const std::vector<int>& bits) {
  detail::require(bits.size() == logits.value().size(), "bernoulli_log_prob: size mismatch");
  Tape<T>* tp = logits.tape();
  const bool rg = detail::wants_grad(logits);
  Tensor<T> out = tp->alloc(logits.shape(), rg);
  auto softplus = [](T z) { return z > T(20) ? z : std::log1p(std::exp(z)); };
  for (size_t i = 0; i < bits.size(); ++i) {
    const T x = logits.value()[i];
    out.value()[i] = bits[i] ? -softplus(-x) : -softplus(x);
  }
  if (rg) {
    auto* xd = logits.data();
    auto* od = out.data();
    auto bc = bits;
    tp->record([xd, od, bc = std::move(bc)] {
      for (size_t i = 0; i < bc.size(); ++i) {
        const T s = T(1) / (T(1) + std::exp(-xd->value[i]));
        xd->grad[i] += od->grad[i] * (static_cast<T>(bc[i]) - s);
      }
    });
  }
  return out;
}

// Value-only copy as a fresh no-grad leaf.
template <typename T>
Tensor<T> detach(const Tensor<T>& x) {
  return x.tape()->leaf(x.shape(), x.value(), false);
}

}  // namespace tarmac
