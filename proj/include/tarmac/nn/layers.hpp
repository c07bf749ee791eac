#pragma once

#include <string>

#include "tarmac/core/ops.hpp"
#include "tarmac/nn/param_store.hpp"

namespace tarmac {

template <typename T>
struct Linear {
  TensorData<T>* w = nullptr;  // [in x out]
  TensorData<T>* b = nullptr;  // [out]
  int in = 0, out = 0;

  static Linear create(ParamStore<T>& store, const std::string& name, int in, int out,
                       Init weight_init = Init::fan_in_uniform) {
    Linear l;
    l.in = in;
    l.out = out;
    l.w = store.add(name + ".w", {in, out}, weight_init);
    l.b = store.add(name + ".b", {out}, Init::zero);
    return l;
  }

  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& x) const {
    if (x.cols() != in)
      throw TensorError("linear: input width " + std::to_string(x.cols()) + " expected " +
                        std::to_string(in));
    return add_bias(matmul(x, tape.adopt(w)), tape.adopt(b));
  }
};

// 1-layer GRU cell:
//   z = sig(Wz [x||h] + bz)
//   r = sig(Wr [x||h] + br)
//   cand = tanh(Wh [x||r.h] + bh)
//   h' = (1-z).h + z.cand
template <typename T>
struct GruCell {
  int input_size = 0, hidden_size = 0;
  TensorData<T>*wz = nullptr, *bz = nullptr;
  TensorData<T>*wr = nullptr, *br = nullptr;
  TensorData<T>*wh = nullptr, *bh = nullptr;

  static GruCell create(ParamStore<T>& store, const std::string& name, int in, int hid) {
    GruCell c;
    c.input_size = in;
    c.hidden_size = hid;
    c.wz = store.add(name + ".wz", {in + hid, hid});
    c.bz = store.add(name + ".bz", {hid}, Init::zero);
    c.wr = store.add(name + ".wr", {in + hid, hid});
    c.br = store.add(name + ".br", {hid}, Init::zero);
    c.wh = store.add(name + ".wh", {in + hid, hid});
    c.bh = store.add(name + ".bh", {hid}, Init::zero);
    return c;
  }

  Tensor<T> step(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& h) const {
    if (x.cols() != input_size || h.cols() != hidden_size || x.rows() != h.rows())
      throw TensorError("gru_step: shape mismatch " + shape_str(x.shape()) + " vs " +
                        shape_str(h.shape()));
    auto xh = concat_cols(x, h);
    auto z = sigmoid(add_bias(matmul(xh, tape.adopt(wz)), tape.adopt(bz)));
    auto r = sigmoid(add_bias(matmul(xh, tape.adopt(wr)), tape.adopt(br)));
    auto xrh = concat_cols(x, mul(r, h));
    auto cand = tanh_op(add_bias(matmul(xrh, tape.adopt(wh)), tape.adopt(bh)));
    // (1-z).h + z.cand, written as h + z.(cand - h)
    return add(h, mul(z, sub(cand, h)));
  }
};

}  // namespace tarmac
