#pragma once

// Masked-prediction feature extraction: causal transformer encoding,
// next-frame prediction with one-frame shift alignment, and a stack of
// convolutional window cross-attention blocks comparing predicted against
// actual frame features. Instantiated once per stream (audio, visual, cross).

#include "mpdf/config.hpp"
#include "mpdf/nn.hpp"

namespace mpdf::mp {

using ad::Mat;
using ad::Tape;
using ad::Var;

template <typename S>
struct CausalEncoder {
  std::vector<nn::TransformerEncoderLayer<S>> layers;
  nn::LayerNorm<S> final_ln;

  CausalEncoder() = default;
  CausalEncoder(nn::ParamStore<S>& ps, const std::string& name, Eigen::Index d, int n_layers,
                int heads) {
    for (int i = 0; i < n_layers; ++i)
      layers.emplace_back(ps, name + ".l" + std::to_string(i), d, heads, 2 * d);
    final_ln = nn::LayerNorm<S>(ps, name + ".final_ln", d);
  }

  // Adds sinusoidal position encoding, then runs the causal stack.
  Var<S> operator()(Tape<S>& t, Var<S> x, nn::AttnProbe<S>* probe = nullptr) const {
    if (!x->val.allFinite()) throw std::invalid_argument("causal encoder: non-finite input");
    Eigen::Index T = x->val.rows(), d = x->val.cols();
    Mat<S> mask = ad::causal_mask<S>(T);
    Var<S> h = ad::add_const(t, x, nn::sinusoidal_position_encoding<S>(T, d));
    for (const auto& layer : layers) h = layer(t, h, &mask, probe);
    return final_ln(t, h);
  }
};

template <typename S>
struct CausalDecoder {
  std::vector<nn::TransformerDecoderLayer<S>> layers;
  nn::LayerNorm<S> final_ln;

  CausalDecoder() = default;
  CausalDecoder(nn::ParamStore<S>& ps, const std::string& name, Eigen::Index d, int n_layers,
                int heads) {
    for (int i = 0; i < n_layers; ++i)
      layers.emplace_back(ps, name + ".l" + std::to_string(i), d, heads, 2 * d);
    final_ln = nn::LayerNorm<S>(ps, name + ".final_ln", d);
  }

  // Consumes E as its input sequence and cross-attends into E; both
  // attentions are causal. Row t of the output predicts frame t+1.
  Var<S> operator()(Tape<S>& t, Var<S> e, nn::AttnProbe<S>* probe = nullptr) const {
    Eigen::Index T = e->val.rows();
    Mat<S> mask = ad::causal_mask<S>(T);
    Var<S> h = e;
    for (const auto& layer : layers) h = layer(t, h, e, &mask, &mask, probe);
    return final_ln(t, h);
  }
};

// One gated window-attention block:
//   q = Linear(GN(P));  k = DWConv_w(GN(E));  u = DWConv_w(GN(E)), own kernels
//   alpha = sigmoid(q .* k / sqrt(d));  out = GN(P + alpha .* u)
template <typename S>
struct ConvAttentionBlock {
  nn::GroupNorm<S> gn_p, gn_e, gn_out;
  nn::Linear<S> q_lin;
  nn::Parameter<S>*k_kernel = nullptr, *k_bias = nullptr;
  nn::Parameter<S>*u_kernel = nullptr, *u_bias = nullptr;
  Eigen::Index dim = 0;

  ConvAttentionBlock() = default;
  ConvAttentionBlock(nn::ParamStore<S>& ps, const std::string& name, Eigen::Index d, int w,
                     int groups)
      : dim(d) {
    gn_p = nn::GroupNorm<S>(ps, name + ".gn_p", d, groups);
    gn_e = nn::GroupNorm<S>(ps, name + ".gn_e", d, groups);
    gn_out = nn::GroupNorm<S>(ps, name + ".gn_out", d, groups);
    q_lin = nn::Linear<S>(ps, name + ".q", d, d);
    k_kernel = &ps.create(name + ".k_kernel", w, d, nn::Init::Xavier);
    k_bias = &ps.create(name + ".k_bias", 1, d, nn::Init::Zero);
    u_kernel = &ps.create(name + ".u_kernel", w, d, nn::Init::Xavier);
    u_bias = &ps.create(name + ".u_bias", 1, d, nn::Init::Zero);
  }

  Var<S> operator()(Tape<S>& t, Var<S> p, Var<S> e) const {
    Var<S> q = q_lin(t, gn_p(t, p));
    Var<S> e_norm = gn_e(t, e);
    Var<S> k = ad::depthwise_conv1d(t, e_norm, nn::use(t, *k_kernel), nn::use(t, *k_bias));
    Var<S> u = ad::depthwise_conv1d(t, e_norm, nn::use(t, *u_kernel), nn::use(t, *u_bias));
    Var<S> alpha = ad::sigmoid(t, ad::scale(t, ad::mul(t, q, k), S(1) / std::sqrt(S(dim))));
    return gn_out(t, ad::add(t, p, ad::mul(t, alpha, u)));
  }
};

template <typename S>
struct MaskedPredOutput {
  Var<S> attended;   // O: the module output (A, V or C)
  Var<S> predicted;  // P: shift-aligned next-frame predictions
  Var<S> actual;     // E: causal encoder output
};

template <typename S>
struct MaskedPredModule {
  CausalEncoder<S> encoder;
  CausalDecoder<S> decoder;
  std::vector<ConvAttentionBlock<S>> blocks;
  // Ablation alternative: N transformer decoder layers with full attention in
  // place of the convolutional blocks.
  std::vector<nn::TransformerDecoderLayer<S>> alt_blocks;
  nn::LayerNorm<S> alt_final_ln;
  Eigen::Index dim = 0;

  MaskedPredModule() = default;
  MaskedPredModule(nn::ParamStore<S>& ps, const std::string& name, Eigen::Index d,
                   const ModelConfig& cfg)
      : dim(d) {
    encoder = CausalEncoder<S>(ps, name + ".enc", d, cfg.enc_layers, cfg.heads);
    decoder = CausalDecoder<S>(ps, name + ".dec", d, cfg.dec_layers, cfg.heads);
    if (cfg.attention_kind == "convolutional") {
      for (int b = 0; b < cfg.N; ++b)
        blocks.emplace_back(ps, name + ".blk" + std::to_string(b), d, cfg.w,
                            cfg.groupnorm_groups);
    } else {
      int n = cfg.attention_kind == "transformer-1" ? 1 : 3;
      for (int b = 0; b < n; ++b)
        alt_blocks.emplace_back(ps, name + ".alt" + std::to_string(b), d, cfg.heads, 2 * d);
      alt_final_ln = nn::LayerNorm<S>(ps, name + ".alt_final_ln", d);
    }
  }

  Var<S> causal_encode(Tape<S>& t, Var<S> x, nn::AttnProbe<S>* probe = nullptr) const {
    return encoder(t, x, probe);
  }

  Var<S> causal_decode_predict(Tape<S>& t, Var<S> e, nn::AttnProbe<S>* probe = nullptr) const {
    return decoder(t, e, probe);
  }

  Var<S> conv_cross_attend(Tape<S>& t, Var<S> p, Var<S> e) const {
    if (!alt_blocks.empty()) {
      Var<S> h = p;
      for (const auto& layer : alt_blocks) h = layer(t, h, e, nullptr, nullptr);
      return alt_final_ln(t, h);
    }
    Var<S> h = p;
    for (const auto& block : blocks) h = block(t, h, e);  // E shared raw across blocks
    return h;
  }

  MaskedPredOutput<S> operator()(Tape<S>& t, Var<S> x, nn::AttnProbe<S>* probe = nullptr) const {
    Var<S> e = causal_encode(t, x, probe);
    Var<S> p_raw = causal_decode_predict(t, e, probe);
    Var<S> p = ad::shift_align(t, p_raw, e);
    Var<S> o = conv_cross_attend(t, p, e);
    return {o, p, e};
  }
};

}  // namespace mpdf::mp
