#pragma once

// Test-only reference implementations, kept independent of the library code
// they check: plain loops, long-double formula evaluations, and a central
// finite-difference driver.

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace oracle {

// Plain i-j-k triple loop, deliberately not the library's kernel ordering.
template <typename T>
std::vector<T> matmul(const std::vector<T>& a, const std::vector<T>& b, int m, int k, int n) {
  std::vector<T> c(static_cast<size_t>(m) * n, T(0));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      T acc = T(0);
      for (int p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  return c;
}

// Direct formula at long-double precision.
inline std::vector<long double> softmax(const std::vector<long double>& x, long double scale) {
  long double mx = x[0];
  for (long double v : x) mx = std::max(mx, v);
  std::vector<long double> y(x.size());
  long double sum = 0.0L;
  for (size_t i = 0; i < x.size(); ++i) {
    y[i] = std::exp(scale * (x[i] - mx));
    sum += y[i];
  }
  for (auto& v : y) v /= sum;
  return y;
}

// Scalar-loop GRU step: z = sig(Wz [x;h] + bz), r = sig(Wr [x;h] + br),
// cand = tanh(Wh [x; r.h] + bh), h' = (1-z).h + z.cand.
// Weights are row-major [in+hid][hid].
template <typename T>
std::vector<T> gru_step(const std::vector<T>& x, const std::vector<T>& h,
                        const std::vector<T>& wz, const std::vector<T>& bz,
                        const std::vector<T>& wr, const std::vector<T>& br,
                        const std::vector<T>& wh, const std::vector<T>& bh,
                        int in, int hid) {
  auto affine = [&](const std::vector<T>& w, const std::vector<T>& b,
                    const std::vector<T>& xin, const std::vector<T>& hin) {
    std::vector<T> out(hid);
    for (int j = 0; j < hid; ++j) {
      T acc = b[j];
      for (int p = 0; p < in; ++p) acc += xin[p] * w[p * hid + j];
      for (int p = 0; p < hid; ++p) acc += hin[p] * w[(in + p) * hid + j];
      out[j] = acc;
    }
    return out;
  };
  std::vector<T> z = affine(wz, bz, x, h);
  std::vector<T> r = affine(wr, br, x, h);
  for (int j = 0; j < hid; ++j) {
    z[j] = T(1) / (T(1) + std::exp(-z[j]));
    r[j] = T(1) / (T(1) + std::exp(-r[j]));
  }
  std::vector<T> rh(hid);
  for (int j = 0; j < hid; ++j) rh[j] = r[j] * h[j];
  std::vector<T> cand = affine(wh, bh, x, rh);
  std::vector<T> out(hid);
  for (int j = 0; j < hid; ++j) {
    cand[j] = std::tanh(cand[j]);
    out[j] = (T(1) - z[j]) * h[j] + z[j] * cand[j];
  }
  return out;
}

// Central finite differences of a scalar function w.r.t. one flat buffer.
inline std::vector<double> finite_diff(std::vector<double>& params,
                                       const std::function<double()>& eval,
                                       double eps = 1e-5) {
  std::vector<double> g(params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + eps;
    const double fp = eval();
    params[i] = keep - eps;
    const double fm = eval();
    params[i] = keep;
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

inline double max_rel_err(const std::vector<double>& analytic, const std::vector<double>& numeric,
                          double floor = 1e-3) {
  double worst = 0.0;
  for (size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({floor, std::fabs(analytic[i]), std::fabs(numeric[i])});
    worst = std::max(worst, std::fabs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

// Rank-then-Pearson with average ranks for ties; brute force reference.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  auto ranks = [](const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<double> r(n);
    for (size_t i = 0; i < n; ++i) {
      size_t less = 0, equal = 0;
      for (size_t j = 0; j < n; ++j) {
        if (v[j] < v[i]) ++less;
        if (v[j] == v[i]) ++equal;
      }
      r[i] = less + (equal + 1) / 2.0;  // average rank, 1-based
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const size_t n = a.size();
  double ma = 0, mb = 0;
  for (size_t i = 0; i < n; ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0, va = 0, vb = 0;
  for (size_t i = 0; i < n; ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0 || vb == 0) return std::nan("");
  return cov / std::sqrt(va * vb);
}

}  // namespace oracle
