#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "tarmac/core/rng.hpp"
#include "tarmac/core/tensor.hpp"

namespace tarmac {

enum class Init { fan_in_uniform, zero };

// Named parameter tensors plus their RMSProp accumulators. Networks register
// parameters here once; rollout tapes adopt them read-only, the optimizer
// step is the only mutation point.
template <typename T>
class ParamStore {
 public:
  struct Param {
    std::string name;
    TensorData<T> data;
    std::vector<T> rms_v;
    Init init = Init::fan_in_uniform;
  };

  TensorData<T>* add(const std::string& name, Shape shape, Init init = Init::fan_in_uniform) {
    if (index_.count(name)) throw TensorError("duplicate parameter name: " + name);
    auto p = std::make_unique<Param>();
    p->name = name;
    p->data.shape = std::move(shape);
    p->data.value.assign(static_cast<size_t>(numel(p->data.shape)), T(0));
    p->data.grad.assign(p->data.value.size(), T(0));
    p->data.requires_grad = true;
    p->rms_v.assign(p->data.value.size(), T(0));
    p->init = init;
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return &params_.back()->data;
  }

  TensorData<T>* find(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw TensorError("unknown parameter: " + name);
    return &params_[it->second]->data;
  }

  const std::vector<std::unique_ptr<Param>>& params() const { return params_; }
  size_t size() const { return params_.size(); }

  std::int64_t scalar_count() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += p->data.size();
    return n;
  }

  // Weights: uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], fan_in = rows.
  // Biases (rank 1) and zero-tagged params are zero. Deterministic in seed.
  void init_params(std::uint64_t seed) {
    std::mt19937 rng = make_rng(seed, 0x9a7a);
    for (auto& p : params_) {
      if (p->init == Init::zero || p->data.shape.size() < 2) {
        std::fill(p->data.value.begin(), p->data.value.end(), T(0));
        continue;
      }
      const double bound = 1.0 / std::sqrt(static_cast<double>(p->data.shape[0]));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : p->data.value) v = static_cast<T>(dist(rng));
    }
  }

  void zero_grad() {
    for (auto& p : params_) std::fill(p->data.grad.begin(), p->data.grad.end(), T(0));
  }

  // v <- alpha v + (1-alpha) g^2 ; theta <- theta - lr g / (sqrt(v) + eps);
  // grads are cleared afterwards.
  void rmsprop_step(T lr, T alpha, T eps) {
    for (auto& p : params_) {
      if (p->data.grad.size() != p->data.value.size())
        throw TensorError("rmsprop_step: missing grad for " + p->name);
      for (size_t i = 0; i < p->data.value.size(); ++i) {
        const T g = p->data.grad[i];
        p->rms_v[i] = alpha * p->rms_v[i] + (T(1) - alpha) * g * g;
        p->data.value[i] -= lr * g / (std::sqrt(p->rms_v[i]) + eps);
        p->data.grad[i] = T(0);
      }
    }
  }

  void scale_grads(T factor) {
    for (auto& p : params_)
      for (T& g : p->data.grad) g *= factor;
  }

  double grad_norm() const {
    double s = 0;
    for (const auto& p : params_)
      for (T g : p->data.grad) s += static_cast<double>(g) * static_cast<double>(g);
    return std::sqrt(s);
  }

 private:
  std::vector<std::unique_ptr<Param>> params_;
  std::map<std::string, size_t> index_;
};

}  // namespace tarmac
