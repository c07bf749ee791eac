#pragma once

// Shared gradient-check driver: runs every differentiable op through a
// randomized central finite-difference comparison in 64-bit. Used by both the
// unit tests and the acceptance suite.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "tarmac/core/ops.hpp"
#include "tarmac/core/tensor.hpp"

namespace gradcheck {

using tarmac::Tape;
using tarmac::Tensor;

struct OpCase {
  std::string name;
  double rel_err = 0.0;
  bool ok = false;
};

// Builds loss = sum(w .* f(x)) from a flat input buffer, compares tape
// gradients against central differences.
inline OpCase check_unary(const std::string& name, tarmac::Shape shape,
                          const std::function<Tensor<double>(Tape<double>&, Tensor<double>)>& f,
                          std::mt19937& rng, double lo = -2.0, double hi = 2.0,
                          double tol = 1e-4) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> xv(static_cast<size_t>(tarmac::numel(shape)));
  for (auto& v : xv) v = dist(rng);
  std::vector<double> w;  // fixed mixing weights so the loss sees every output
  std::uniform_real_distribution<double> wdist(-1.0, 1.0);

  auto eval = [&](std::vector<double>* grad_out) {
    Tape<double> tape;
    auto x = tape.leaf(shape, xv, true);
    auto y = f(tape, x);
    if (w.empty())
      for (std::int64_t i = 0; i < y.size(); ++i) w.push_back(wdist(rng));
    auto loss = tarmac::sum(tarmac::mul_const(y, w));
    if (grad_out) {
      tape.backward(loss);
      *grad_out = x.grad();
    }
    return loss.item();
  };

  std::vector<double> analytic;
  eval(&analytic);
  auto numeric = oracle::finite_diff(xv, [&] { return eval(nullptr); });
  OpCase c{name, oracle::max_rel_err(analytic, numeric), false};
  c.ok = c.rel_err < tol;
  return c;
}

// Two-input variant; checks gradients w.r.t. both operands.
inline OpCase check_binary(
    const std::string& name, tarmac::Shape sa, tarmac::Shape sb,
    const std::function<Tensor<double>(Tape<double>&, Tensor<double>, Tensor<double>)>& f,
    std::mt19937& rng, double lo = -2.0, double hi = 2.0, double tol = 1e-4) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> av(static_cast<size_t>(tarmac::numel(sa)));
  std::vector<double> bv(static_cast<size_t>(tarmac::numel(sb)));
  for (auto& v : av) v = dist(rng);
  for (auto& v : bv) v = dist(rng);
  std::vector<double> w;
  std::uniform_real_distribution<double> wdist(-1.0, 1.0);

  auto eval = [&](std::vector<double>* ga, std::vector<double>* gb) {
    Tape<double> tape;
    auto a = tape.leaf(sa, av, true);
    auto b = tape.leaf(sb, bv, true);
    auto y = f(tape, a, b);
    if (w.empty())
      for (std::int64_t i = 0; i < y.size(); ++i) w.push_back(wdist(rng));
    auto loss = tarmac::sum(tarmac::mul_const(y, w));
    if (ga) {
      tape.backward(loss);
      *ga = a.grad();
      *gb = b.grad();
    }
    return loss.item();
  };

  std::vector<double> ga, gb;
  eval(&ga, &gb);
  auto na = oracle::finite_diff(av, [&] { return eval(nullptr, nullptr); });
  auto nb = oracle::finite_diff(bv, [&] { return eval(nullptr, nullptr); });
  OpCase c{name, std::max(oracle::max_rel_err(ga, na), oracle::max_rel_err(gb, nb)), false};
  c.ok = c.rel_err < tol;
  return c;
}

// The full per-op sweep used by acceptance criterion "gradient integrity".
inline std::vector<OpCase> all_op_checks(std::uint64_t seed) {
  std::mt19937 rng(static_cast<std::uint32_t>(seed));
  std::vector<OpCase> out;
  using tarmac::Tensor;

  out.push_back(check_binary(
      "matmul", {3, 4}, {4, 5},
      [](Tape<double>&, Tensor<double> a, Tensor<double> b) { return tarmac::matmul(a, b); },
      rng));
  out.push_back(check_binary(
      "matmul_nt", {3, 4}, {5, 4},
      [](Tape<double>&, Tensor<double> a, Tensor<double> b) { return tarmac::matmul_nt(a, b); },
      rng));
  out.push_back(check_binary(
      "add", {3, 3}, {3, 3},
      [](Tape<double>&, Tensor<double> a, Tensor<double> b) { return tarmac::add(a, b); },
      rng));
  out.push_back(check_binary(
      "sub", {3, 3}, {3, 3},
      [](Tape<double>&, Tensor<double> a, Tensor<double> b) { return tarmac::sub(a, b); },
      rng));
  out.push_back(check_binary(
      "mul", {3, 3}, {3, 3},
      [](Tape<double>&, Tensor<double> a, Tensor<double> b) { return tarmac::mul(a, b); },
      rng));
  out.push_back(check_binary(
      "add_bias", {4, 3}, {3},
      [](Tape<double>&, Tensor<double> a, Tensor<double> b) { return tarmac::add_bias(a, b); },
      rng));
  out.push_back(check_unary(
      "tanh", {2, 5},
      [](Tape<double>&, Tensor<double> x) { return tarmac::tanh_op(x); }, rng));
  out.push_back(check_unary(
      "sigmoid", {2, 5},
      [](Tape<double>&, Tensor<double> x) { return tarmac::sigmoid(x); }, rng));
  out.push_back(check_unary(
      "relu", {2, 5},
      [](Tape<double>&, Tensor<double> x) { return tarmac::relu(x); }, rng, 0.05, 2.0));
  out.push_back(check_unary(
      "log", {2, 5},
      [](Tape<double>&, Tensor<double> x) { return tarmac::log_op(x); }, rng, 0.1, 3.0));
  out.push_back(check_unary(
      "exp", {2, 5},
      [](Tape<double>&, Tensor<double> x) { return tarmac::exp_op(x); }, rng));
  out.push_back(check_unary(
      "scale", {2, 5},
      [](Tape<double>&, Tensor<double> x) { return tarmac::scale(x, 1.7); }, rng));
  out.push_back(check_unary(
      "softmax", {3, 6},
      [](Tape<double>&, Tensor<double> x) { return tarmac::softmax(x, 0.5); }, rng));
  out.push_back(check_unary(
      "log_softmax", {3, 6},
      [](Tape<double>&, Tensor<double> x) { return tarmac::log_softmax(x); }, rng));
  out.push_back(check_unary(
      "row_sum", {3, 6},
      [](Tape<double>&, Tensor<double> x) { return tarmac::row_sum(x); }, rng));
  out.push_back(check_unary(
      "mean", {3, 6},
      [](Tape<double>&, Tensor<double> x) { return tarmac::mean(x); }, rng));
  out.push_back(check_unary(
      "rows", {5, 3},
      [](Tape<double>&, Tensor<double> x) { return tarmac::rows(x, 1, 4); }, rng));
  out.push_back(check_unary(
      "gather_cols", {4, 5},
      [](Tape<double>&, Tensor<double> x) {
        return tarmac::gather_cols(x, {1, 0, 4, 2});
      },
      rng));
  out.push_back(check_unary(
      "mul_rowmask", {4, 3},
      [](Tape<double>&, Tensor<double> x) {
        return tarmac::mul_rowmask(x, {1.0, 0.0, 1.0, 0.5});
      },
      rng));
  out.push_back(check_unary(
      "add_rowvec_const", {4, 3},
      [](Tape<double>&, Tensor<double> x) {
        return tarmac::add_rowvec_const(x, {0.3, -3.0, 0.1});
      },
      rng));
  out.push_back(check_binary(
      "concat_cols", {3, 2}, {3, 4},
      [](Tape<double>&, Tensor<double> a, Tensor<double> b) {
        return tarmac::concat_cols(a, b);
      },
      rng));
  out.push_back(check_binary(
      "concat_rows", {2, 4}, {3, 4},
      [](Tape<double>&, Tensor<double> a, Tensor<double> b) {
        return tarmac::concat_rows(std::vector<Tensor<double>>{a, b});
      },
      rng));
  out.push_back(check_unary(
      "bernoulli_log_prob", {5, 1},
      [](Tape<double>&, Tensor<double> x) {
        return tarmac::bernoulli_log_prob(x, {1, 0, 1, 1, 0});
      },
      rng));
  return out;
}

}  // namespace gradcheck
