#pragma once

// Intra/cross-modal feature mixing: L levels of alternating cross-attention.
// Each level attends the running cross-modal state first into concat(V, A),
// then into concat(A, V), so every channel sees both unimodal streams.

#include "mpdf/config.hpp"
#include "mpdf/nn.hpp"

namespace mpdf::mix {

using ad::Tape;
using ad::Var;

template <typename S>
struct FeatureMixing {
  std::vector<nn::TransformerDecoderLayer<S>> dec_va;  // queries z, memory concat(V,A)
  std::vector<nn::TransformerDecoderLayer<S>> dec_av;  // queries z', memory concat(A,V)
  int L = 0;

  FeatureMixing() = default;
  FeatureMixing(nn::ParamStore<S>& ps, const ModelConfig& cfg) : L(cfg.L) {
    if (cfg.L < 1) throw std::invalid_argument("mixing: L must be >= 1");
    Eigen::Index d = 2 * cfg.f;
    for (int l = 0; l < cfg.L; ++l) {
      dec_va.emplace_back(ps, "mix.l" + std::to_string(l) + ".va", d, cfg.heads, 2 * d);
      dec_av.emplace_back(ps, "mix.l" + std::to_string(l) + ".av", d, cfg.heads, 2 * d);
    }
  }

  // Returns all L level outputs z(1)..z(L), each T x 2f.
  std::vector<Var<S>> operator()(Tape<S>& t, Var<S> c, Var<S> a, Var<S> v) const {
    if (a->val.rows() != v->val.rows() || a->val.rows() != c->val.rows())
      throw std::invalid_argument("mixing: sequence length mismatch");
    if (c->val.cols() != a->val.cols() + v->val.cols())
      throw std::invalid_argument("mixing: cross width must equal sum of unimodal widths");
    Var<S> memory_va = ad::concat_cols(t, {v, a});
    Var<S> memory_av = ad::concat_cols(t, {a, v});
    std::vector<Var<S>> levels;
    levels.reserve(L);
    Var<S> z = c;  // z(0) = C
    for (int l = 0; l < L; ++l) {
      Var<S> zp = dec_va[l](t, z, memory_va, nullptr, nullptr);
      z = dec_av[l](t, zp, memory_av, nullptr, nullptr);
      levels.push_back(z);
    }
    return levels;
  }
};

// Single-stream stand-in used by the feature-set ablations: the decoder pairs
// are replaced by an equal number of self-attention encoder layers, with one
// level output captured after every second layer.
template <typename S>
struct SingleStreamLevels {
  std::vector<nn::TransformerEncoderLayer<S>> layers;
  int L = 0;

  SingleStreamLevels() = default;
  SingleStreamLevels(nn::ParamStore<S>& ps, const ModelConfig& cfg, Eigen::Index d) : L(cfg.L) {
    for (int l = 0; l < 2 * cfg.L; ++l)
      layers.emplace_back(ps, "single.l" + std::to_string(l), d, cfg.heads, 2 * d);
  }

  std::vector<Var<S>> operator()(Tape<S>& t, Var<S> x) const {
    std::vector<Var<S>> levels;
    levels.reserve(L);
    Var<S> h = x;
    for (int l = 0; l < L; ++l) {
      h = layers[2 * l](t, h, nullptr);
      h = layers[2 * l + 1](t, h, nullptr);
      levels.push_back(h);
    }
    return levels;
  }
};

}  // namespace mpdf::mix
