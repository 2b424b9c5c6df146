#pragma once

// Frame-wise unimodal encoders and the stack-and-linear cross-modal fusion.
// All three operations are strictly per-frame: output row t is a function of
// input row t (or audio rows [r*t, r*(t+1))) only.

#include "mpdf/config.hpp"
#include "mpdf/nn.hpp"

namespace mpdf::enc {

using ad::Mat;
using ad::Tape;
using ad::Var;

template <typename S>
void ensure_finite(Var<S> x, const char* what) {
  if (!x->val.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite input");
}

// Two-layer per-frame perceptron: D_v -> hidden -> f.
template <typename S>
struct VisualEncoder {
  nn::Linear<S> fc1, fc2;
  int D_v = 0;

  VisualEncoder() = default;
  VisualEncoder(nn::ParamStore<S>& ps, const ModelConfig& cfg)
      : fc1(ps, "enc_v.fc1", cfg.D_v, cfg.encoder_hidden),
        fc2(ps, "enc_v.fc2", cfg.encoder_hidden, cfg.f),
        D_v(cfg.D_v) {}

  Var<S> operator()(Tape<S>& t, Var<S> x) const {
    if (x->val.cols() != D_v)
      throw std::invalid_argument("visual encoder: expected " + std::to_string(D_v) +
                                  " input channels");
    ensure_finite(x, "visual encoder");
    return fc2(t, ad::relu(t, fc1(t, x)));
  }
};

// Per-step perceptron, mean-pool over the r steps of a frame, project to f.
template <typename S>
struct AudioEncoder {
  nn::Linear<S> fc1, proj;
  int B = 0, r = 4;

  AudioEncoder() = default;
  AudioEncoder(nn::ParamStore<S>& ps, const ModelConfig& cfg)
      : fc1(ps, "enc_a.fc1", cfg.B, cfg.encoder_hidden),
        proj(ps, "enc_a.proj", cfg.encoder_hidden, cfg.f),
        B(cfg.B),
        r(cfg.r) {}

  Var<S> operator()(Tape<S>& t, Var<S> x) const {
    if (x->val.cols() != B)
      throw std::invalid_argument("audio encoder: expected " + std::to_string(B) +
                                  " input channels");
    if (x->val.rows() % r != 0)
      throw std::invalid_argument("audio encoder: T_a not divisible by r");
    ensure_finite(x, "audio encoder");
    Var<S> h = ad::relu(t, fc1(t, x));
    return proj(t, ad::group_mean_rows(t, h, r));
  }
};

// c' = concat(v, a); m = Linear_{2f->2f}(c'); c = w0*m + w1*c' + b.
// The final step is the Linear_{2->1} over the stacked pair.
template <typename S>
struct CrossModalFusion {
  nn::Linear<S> mix;
  nn::Parameter<S>*stack_w = nullptr, *stack_b = nullptr;

  CrossModalFusion() = default;
  CrossModalFusion(nn::ParamStore<S>& ps, const ModelConfig& cfg) {
    mix = nn::Linear<S>(ps, "fuse.mix", 2 * cfg.f, 2 * cfg.f);
    stack_w = &ps.create("fuse.stack_w", 1, 2, nn::Init::One);
    stack_w->value(0, 0) = S(0.5);
    stack_w->value(0, 1) = S(0.5);
    stack_b = &ps.create("fuse.stack_b", 1, 1, nn::Init::Zero);
  }

  Var<S> operator()(Tape<S>& t, Var<S> v, Var<S> a) const {
    if (v->val.rows() != a->val.rows() || v->val.cols() != a->val.cols())
      throw std::invalid_argument("fusion: visual/audio shape mismatch");
    Var<S> cprime = ad::concat_cols(t, {v, a});
    Var<S> m = mix(t, cprime);
    Var<S> wvar = nn::use(t, *stack_w);
    Var<S> w0 = ad::slice_cols(t, wvar, 0, 1);
    Var<S> w1 = ad::slice_cols(t, wvar, 1, 1);
    Var<S> combined = ad::add(t, ad::scale_by(t, m, w0), ad::scale_by(t, cprime, w1));
    return ad::add_scalar_var(t, combined, nn::use(t, *stack_b));
  }
};

}  // namespace mpdf::enc
