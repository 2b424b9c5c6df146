#pragma once

// Layer library over the autodiff tape: parameter storage, linear layers,
// multi-head attention, pre-norm transformer encoder/decoder layers, and
// sinusoidal position encodings.

#include <cmath>
#include <deque>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "mpdf/autodiff.hpp"

namespace mpdf::nn {

using ad::Mat;
using ad::Tape;
using ad::Var;

template <typename S>
struct Parameter {
  std::string name;
  Mat<S> value;
  Mat<S> grad;

  void zero_grad() { grad.setZero(); }
};

enum class Init { Xavier, Zero, One };

// Owns all parameters of a model in creation order. Creation order is part of
// the model's identity: the optimizer and the checkpoint reader rely on it.
template <typename S>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed) : rng_(seed) {}

  Parameter<S>& create(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                       Init init) {
    params_.emplace_back();
    Parameter<S>& p = params_.back();
    p.name = name;
    p.value.resize(rows, cols);
    p.grad = Mat<S>::Zero(rows, cols);
    switch (init) {
      case Init::Zero:
        p.value.setZero();
        break;
      case Init::One:
        p.value.setOnes();
        break;
      case Init::Xavier: {
        double bound = std::sqrt(6.0 / double(rows + cols));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (Eigen::Index i = 0; i < rows; ++i)
          for (Eigen::Index j = 0; j < cols; ++j) p.value(i, j) = S(dist(rng_));
        break;
      }
    }
    return p;
  }

  std::vector<Parameter<S>*> all() {
    std::vector<Parameter<S>*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(&p);
    return out;
  }

  std::size_t size() const { return params_.size(); }

  void zero_grads() {
    for (auto& p : params_) p.zero_grad();
  }

 private:
  std::deque<Parameter<S>> params_;  // stable addresses
  std::mt19937_64 rng_;
};

// Puts a parameter on the tape; backward accumulates into Parameter::grad.
template <typename S>
Var<S> use(Tape<S>& t, Parameter<S>& p) {
  auto* n = t.leaf(p.value, true);
  n->back = [n, &p] { p.grad += n->grad; };
  return n;
}

// Records post-softmax attention weights (one matrix per head per call).
template <typename S>
struct AttnProbe {
  std::vector<Mat<S>> weights;
};

template <typename S>
struct Linear {
  Parameter<S>*w = nullptr, *b = nullptr;

  Linear() = default;
  Linear(ParamStore<S>& ps, const std::string& name, Eigen::Index in, Eigen::Index out) {
    w = &ps.create(name + ".w", in, out, Init::Xavier);
    b = &ps.create(name + ".b", 1, out, Init::Zero);
  }
  Var<S> operator()(Tape<S>& t, Var<S> x) const {
    return ad::add_row_bias(t, ad::matmul(t, x, use(t, *w)), use(t, *b));
  }
};

template <typename S>
struct LayerNorm {
  Parameter<S>*gamma = nullptr, *beta = nullptr;
  S eps = S(1e-5);

  LayerNorm() = default;
  LayerNorm(ParamStore<S>& ps, const std::string& name, Eigen::Index d) {
    gamma = &ps.create(name + ".gamma", 1, d, Init::One);
    beta = &ps.create(name + ".beta", 1, d, Init::Zero);
  }
  Var<S> operator()(Tape<S>& t, Var<S> x) const {
    return ad::layer_norm(t, x, use(t, *gamma), use(t, *beta), eps);
  }
};

template <typename S>
struct GroupNorm {
  Parameter<S>*gamma = nullptr, *beta = nullptr;
  int groups = 8;
  S eps = S(1e-5);

  GroupNorm() = default;
  GroupNorm(ParamStore<S>& ps, const std::string& name, Eigen::Index d, int groups_)
      : groups(groups_) {
    gamma = &ps.create(name + ".gamma", 1, d, Init::One);
    beta = &ps.create(name + ".beta", 1, d, Init::Zero);
  }
  Var<S> operator()(Tape<S>& t, Var<S> x) const {
    return ad::group_norm(t, x, use(t, *gamma), use(t, *beta), groups, eps);
  }
};

template <typename S>
struct MultiHeadAttention {
  Linear<S> wq, wk, wv, wo;
  int heads = 4;
  Eigen::Index dim = 0;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore<S>& ps, const std::string& name, Eigen::Index d, int heads_)
      : heads(heads_), dim(d) {
    if (d % heads != 0) throw std::invalid_argument("attention dim not divisible by heads");
    wq = Linear<S>(ps, name + ".q", d, d);
    wk = Linear<S>(ps, name + ".k", d, d);
    wv = Linear<S>(ps, name + ".v", d, d);
    wo = Linear<S>(ps, name + ".o", d, d);
  }

  // query: Tq x d, memory: Tk x d; mask (optional) is additive Tq x Tk.
  Var<S> operator()(Tape<S>& t, Var<S> query, Var<S> memory, const Mat<S>* mask,
                    AttnProbe<S>* probe = nullptr) const {
    Eigen::Index dh = dim / heads;
    Var<S> q = wq(t, query), k = wk(t, memory), v = wv(t, memory);
    std::vector<Var<S>> ctx;
    ctx.reserve(heads);
    S inv = S(1) / std::sqrt(S(dh));
    for (int h = 0; h < heads; ++h) {
      Var<S> qh = ad::slice_cols(t, q, h * dh, dh);
      Var<S> kh = ad::slice_cols(t, k, h * dh, dh);
      Var<S> vh = ad::slice_cols(t, v, h * dh, dh);
      Var<S> scores = ad::scale(t, ad::matmul_nt(t, qh, kh), inv);
      Var<S> weights = ad::row_softmax(t, scores, mask);
      if (probe) probe->weights.push_back(weights->val);
      ctx.push_back(ad::matmul(t, weights, vh));
    }
    return wo(t, ad::concat_cols(t, ctx));
  }
};

template <typename S>
struct FeedForward {
  Linear<S> fc1, fc2;

  FeedForward() = default;
  FeedForward(ParamStore<S>& ps, const std::string& name, Eigen::Index d, Eigen::Index hidden) {
    fc1 = Linear<S>(ps, name + ".fc1", d, hidden);
    fc2 = Linear<S>(ps, name + ".fc2", hidden, d);
  }
  Var<S> operator()(Tape<S>& t, Var<S> x) const { return fc2(t, ad::relu(t, fc1(t, x))); }
};

// Pre-norm encoder layer: x + Attn(LN(x)), then x + FF(LN(x)).
template <typename S>
struct TransformerEncoderLayer {
  LayerNorm<S> ln1, ln2;
  MultiHeadAttention<S> attn;
  FeedForward<S> ff;

  TransformerEncoderLayer() = default;
  TransformerEncoderLayer(ParamStore<S>& ps, const std::string& name, Eigen::Index d,
                          int heads, Eigen::Index ff_hidden) {
    ln1 = LayerNorm<S>(ps, name + ".ln1", d);
    attn = MultiHeadAttention<S>(ps, name + ".attn", d, heads);
    ln2 = LayerNorm<S>(ps, name + ".ln2", d);
    ff = FeedForward<S>(ps, name + ".ff", d, ff_hidden);
  }

  Var<S> operator()(Tape<S>& t, Var<S> x, const Mat<S>* mask,
                    AttnProbe<S>* probe = nullptr) const {
    Var<S> h = ln1(t, x);
    x = ad::add(t, x, attn(t, h, h, mask, probe));
    x = ad::add(t, x, ff(t, ln2(t, x)));
    return x;
  }
};

// Pre-norm decoder layer: self-attention, cross-attention into memory, FF.
template <typename S>
struct TransformerDecoderLayer {
  LayerNorm<S> ln1, ln2, ln3;
  MultiHeadAttention<S> self_attn, cross_attn;
  FeedForward<S> ff;

  TransformerDecoderLayer() = default;
  TransformerDecoderLayer(ParamStore<S>& ps, const std::string& name, Eigen::Index d,
                          int heads, Eigen::Index ff_hidden) {
    ln1 = LayerNorm<S>(ps, name + ".ln1", d);
    self_attn = MultiHeadAttention<S>(ps, name + ".self", d, heads);
    ln2 = LayerNorm<S>(ps, name + ".ln2", d);
    cross_attn = MultiHeadAttention<S>(ps, name + ".cross", d, heads);
    ln3 = LayerNorm<S>(ps, name + ".ln3", d);
    ff = FeedForward<S>(ps, name + ".ff", d, ff_hidden);
  }

  // skip_cross drops the memory path entirely (used to verify that zeroed
  // memories reduce the layer to its query-only computation).
  Var<S> operator()(Tape<S>& t, Var<S> x, Var<S> memory, const Mat<S>* self_mask,
                    const Mat<S>* cross_mask, AttnProbe<S>* probe = nullptr,
                    bool skip_cross = false) const {
    Var<S> h = ln1(t, x);
    x = ad::add(t, x, self_attn(t, h, h, self_mask, probe));
    if (!skip_cross) {
      x = ad::add(t, x, cross_attn(t, ln2(t, x), memory, cross_mask, probe));
    }
    x = ad::add(t, x, ff(t, ln3(t, x)));
    return x;
  }
};

// Standard sinusoidal position encoding, T x d.
template <typename S>
Mat<S> sinusoidal_position_encoding(Eigen::Index T, Eigen::Index d) {
  Mat<S> pe(T, d);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index i = 0; i < d; ++i) {
      double freq = std::pow(10000.0, -double(2 * (i / 2)) / double(d));
      double angle = double(t) * freq;
      pe(t, i) = S(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

}  // namespace mpdf::nn
