#pragma once

// Task heads. Classification: per-level linear projections, channel fusion,
// four stride-2 conv blocks, two dense layers to a single logit. Localization:
// a reconstruction branch, a fusion transformer layer, and a five-level
// temporal pyramid with shared conv towers for per-position classification
// and start/end offset regression.

#include <utility>
#include <vector>

#include "mpdf/config.hpp"
#include "mpdf/nn.hpp"
#include "mpdf/synthdata.hpp"

namespace mpdf::heads {

using ad::Mat;
using ad::Tape;
using ad::Var;
using synthdata::Segment;

constexpr int kPyramidLevels = 5;

inline int ceil_div2(int n) { return (n + 1) / 2; }

inline std::vector<int> pyramid_lengths(int T) {
  std::vector<int> lens(kPyramidLevels);
  lens[0] = T;
  for (int l = 1; l < kPyramidLevels; ++l) lens[l] = ceil_div2(lens[l - 1]);
  return lens;
}

// ---------------------------------------------------------------------------
// Classification head
// ---------------------------------------------------------------------------

template <typename S>
struct ClassifyHead {
  std::vector<nn::Linear<S>> per_level;  // level width -> f
  nn::Linear<S> channel_mix;             // L*f -> 2f
  nn::Parameter<S>*w1 = nullptr, *b1 = nullptr;
  nn::Parameter<S>*w2 = nullptr, *b2 = nullptr;
  nn::Parameter<S>*w3 = nullptr, *b3 = nullptr;
  nn::Parameter<S>*w4 = nullptr, *b4 = nullptr;
  nn::Linear<S> fc_hidden, fc_out;
  int f = 0, L = 0, T_expected = 0;
  bool pooled = false;
  int pooled_length = 16;
  bool enforce_min_length = true;

  ClassifyHead() = default;
  ClassifyHead(nn::ParamStore<S>& ps, const ModelConfig& cfg, int level_width)
      : f(cfg.f),
        L(cfg.L),
        T_expected(cfg.T_v),
        pooled(cfg.pooled_classifier),
        pooled_length(cfg.pooled_length),
        enforce_min_length(cfg.enforce_min_length) {
    if (cfg.f % 4 != 0) throw std::invalid_argument("classify head: f must be divisible by 4");
    for (int l = 0; l < cfg.L; ++l)
      per_level.emplace_back(ps, "cls.level" + std::to_string(l), level_width, cfg.f);
    channel_mix = nn::Linear<S>(ps, "cls.channel_mix", cfg.L * cfg.f, 2 * cfg.f);
    auto make_conv = [&](const char* name, int cin, int cout, nn::Parameter<S>*& w,
                         nn::Parameter<S>*& b) {
      w = &ps.create(std::string("cls.") + name + ".w", 3 * cin, cout, nn::Init::Xavier);
      b = &ps.create(std::string("cls.") + name + ".b", 1, cout, nn::Init::Zero);
    };
    make_conv("conv1", 2 * cfg.f, 2 * cfg.f, w1, b1);
    make_conv("conv2", 2 * cfg.f, cfg.f, w2, b2);
    make_conv("conv3", cfg.f, cfg.f / 2, w3, b3);
    make_conv("conv4", cfg.f / 2, cfg.f / 4, w4, b4);
    int t_in = pooled ? pooled_length : cfg.T_v;
    for (int i = 0; i < 4; ++i) t_in = ceil_div2(t_in);
    fc_hidden = nn::Linear<S>(ps, "cls.fc_hidden", (cfg.f / 4) * t_in, 128);
    fc_out = nn::Linear<S>(ps, "cls.fc_out", 128, 1);
  }

  // z_levels: L sequences (T x level_width). Returns the scalar logit node.
  Var<S> operator()(Tape<S>& t, const std::vector<Var<S>>& z_levels) const {
    if (int(z_levels.size()) != L) throw std::invalid_argument("classify: expected L levels");
    Eigen::Index T = z_levels[0]->val.rows();
    if (!pooled) {
      if (enforce_min_length && T < 16)
        throw std::invalid_argument("classify: sequence too short (needs T >= 16)");
      if (T != T_expected)
        throw std::invalid_argument("classify: head was built for T = " +
                                    std::to_string(T_expected));
    }
    std::vector<Var<S>> xs;
    xs.reserve(L);
    for (int l = 0; l < L; ++l) xs.push_back(per_level[l](t, z_levels[l]));
    Var<S> x = ad::concat_cols(t, xs);  // T x L*f
    if (pooled) x = ad::adaptive_max_pool_rows(t, x, pooled_length);
    x = channel_mix(t, x);  // length x 2f
    x = ad::relu(t, ad::conv1d(t, x, nn::use(t, *w1), nn::use(t, *b1), 3, 2, 1));
    x = ad::relu(t, ad::conv1d(t, x, nn::use(t, *w2), nn::use(t, *b2), 3, 2, 1));
    x = ad::relu(t, ad::conv1d(t, x, nn::use(t, *w3), nn::use(t, *b3), 3, 2, 1));
    x = ad::relu(t, ad::conv1d(t, x, nn::use(t, *w4), nn::use(t, *b4), 3, 2, 1));
    Var<S> flat = ad::flatten_rows(t, x);
    return fc_out(t, fc_hidden(t, flat));
  }
};

// ---------------------------------------------------------------------------
// Localization head
// ---------------------------------------------------------------------------

template <typename S>
struct PyramidOutputs {
  std::vector<Var<S>> cls_logits;   // per level: T_l x 1
  std::vector<Var<S>> reg_offsets;  // per level: T_l x 2, softplus-mapped
  Var<S> video_logit = nullptr;     // max over level-0 logits
  Var<S> reconstructed = nullptr;   // F-hat, same shape as F
  Var<S> features = nullptr;        // F = concat(A, V, C), T x 4f
  std::vector<int> level_lengths;
};

template <typename S>
struct PyramidHead {
  // reconstruction branch (stride-2 bottleneck encoder, nearest-upsample decoder)
  nn::Parameter<S>*re1_w = nullptr, *re1_b = nullptr;
  nn::Parameter<S>*re2_w = nullptr, *re2_b = nullptr;
  nn::Parameter<S>*rd1_w = nullptr, *rd1_b = nullptr;
  nn::Parameter<S>*rd2_w = nullptr, *rd2_b = nullptr;
  nn::Linear<S> fuse;  // concat(F, F-hat, |F - F-hat|) -> 4f
  nn::TransformerEncoderLayer<S> fuse_layer;
  std::vector<nn::Parameter<S>*> down_w, down_b;  // levels 1..4
  // towers shared across levels
  nn::Parameter<S>*tc1_w = nullptr, *tc1_b = nullptr, *tc2_w = nullptr, *tc2_b = nullptr;
  nn::Parameter<S>*tr1_w = nullptr, *tr1_b = nullptr, *tr2_w = nullptr, *tr2_b = nullptr;
  nn::Parameter<S>*cls_w = nullptr, *cls_b = nullptr;
  nn::Parameter<S>*reg_w = nullptr, *reg_b = nullptr;
  int f = 0;
  bool enforce_min_length = true;

  PyramidHead() = default;
  PyramidHead(nn::ParamStore<S>& ps, const ModelConfig& cfg)
      : f(cfg.f), enforce_min_length(cfg.enforce_min_length) {
    int d = 4 * cfg.f, half = 2 * cfg.f;
    auto conv = [&](const char* name, int cin, int cout, nn::Parameter<S>*& w,
                    nn::Parameter<S>*& b) {
      w = &ps.create(std::string("loc.") + name + ".w", 3 * cin, cout, nn::Init::Xavier);
      b = &ps.create(std::string("loc.") + name + ".b", 1, cout, nn::Init::Zero);
    };
    conv("rec_enc1", d, half, re1_w, re1_b);
    conv("rec_enc2", half, half, re2_w, re2_b);
    conv("rec_dec1", half, half, rd1_w, rd1_b);
    conv("rec_dec2", half, d, rd2_w, rd2_b);
    fuse = nn::Linear<S>(ps, "loc.fuse", 3 * d, d);
    fuse_layer = nn::TransformerEncoderLayer<S>(ps, "loc.fuse_layer", d, cfg.heads, 2 * d);
    for (int l = 1; l < kPyramidLevels; ++l) {
      down_w.push_back(&ps.create("loc.down" + std::to_string(l) + ".w", 3 * d, d,
                                  nn::Init::Xavier));
      down_b.push_back(&ps.create("loc.down" + std::to_string(l) + ".b", 1, d, nn::Init::Zero));
    }
    conv("tower_cls1", d, d, tc1_w, tc1_b);
    conv("tower_cls2", d, d, tc2_w, tc2_b);
    conv("tower_reg1", d, d, tr1_w, tr1_b);
    conv("tower_reg2", d, d, tr2_w, tr2_b);
    conv("head_cls", d, 1, cls_w, cls_b);
    conv("head_reg", d, 2, reg_w, reg_b);
  }

  Var<S> reconstruct(Tape<S>& t, Var<S> x) const {
    Eigen::Index T = x->val.rows();
    Eigen::Index T1 = (T + 1) / 2;
    Var<S> h = ad::relu(t, ad::conv1d(t, x, nn::use(t, *re1_w), nn::use(t, *re1_b), 3, 2, 1));
    h = ad::relu(t, ad::conv1d(t, h, nn::use(t, *re2_w), nn::use(t, *re2_b), 3, 2, 1));
    h = ad::upsample2_rows(t, h, T1);
    h = ad::relu(t, ad::conv1d(t, h, nn::use(t, *rd1_w), nn::use(t, *rd1_b), 3, 1, 1));
    h = ad::upsample2_rows(t, h, T);
    return ad::conv1d(t, h, nn::use(t, *rd2_w), nn::use(t, *rd2_b), 3, 1, 1);
  }

  // A: T x f, V: T x f, C: T x 2f.
  PyramidOutputs<S> operator()(Tape<S>& t, Var<S> a, Var<S> v, Var<S> c) const {
    Eigen::Index T = a->val.rows();
    if (v->val.rows() != T || c->val.rows() != T)
      throw std::invalid_argument("localize: sequence length mismatch");
    if (a->val.cols() != f || v->val.cols() != f || c->val.cols() != 2 * f)
      throw std::invalid_argument("localize: feature width mismatch");
    if (enforce_min_length && T < 32)
      throw std::invalid_argument("localize: sequence too short (needs T >= 32)");

    PyramidOutputs<S> out;
    Var<S> F = ad::concat_cols(t, {a, v, c});  // T x 4f
    out.features = F;
    Var<S> fhat = reconstruct(t, F);
    out.reconstructed = fhat;
    Var<S> diff = ad::sub(t, F, fhat);
    Var<S> absdiff = ad::sqrt_elem(t, ad::mul(t, diff, diff));
    Var<S> fused = fuse(t, ad::concat_cols(t, {F, fhat, absdiff}));
    fused = fuse_layer(t, fused, nullptr);

    std::vector<Var<S>> levels{fused};
    for (int l = 1; l < kPyramidLevels; ++l)
      levels.push_back(ad::relu(t, ad::conv1d(t, levels.back(), nn::use(t, *down_w[l - 1]),
                                              nn::use(t, *down_b[l - 1]), 3, 2, 1)));

    for (auto* level : levels) {
      out.level_lengths.push_back(int(level->val.rows()));
      Var<S> hc = ad::relu(t, ad::conv1d(t, level, nn::use(t, *tc1_w), nn::use(t, *tc1_b), 3, 1, 1));
      hc = ad::relu(t, ad::conv1d(t, hc, nn::use(t, *tc2_w), nn::use(t, *tc2_b), 3, 1, 1));
      out.cls_logits.push_back(ad::conv1d(t, hc, nn::use(t, *cls_w), nn::use(t, *cls_b), 3, 1, 1));
      Var<S> hr = ad::relu(t, ad::conv1d(t, level, nn::use(t, *tr1_w), nn::use(t, *tr1_b), 3, 1, 1));
      hr = ad::relu(t, ad::conv1d(t, hr, nn::use(t, *tr2_w), nn::use(t, *tr2_b), 3, 1, 1));
      out.reg_offsets.push_back(
          ad::softplus(t, ad::conv1d(t, hr, nn::use(t, *reg_w), nn::use(t, *reg_b), 3, 1, 1)));
    }
    out.video_logit = ad::max_all(t, out.cls_logits[0]);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Target assignment and proposal decoding (plain values)
// ---------------------------------------------------------------------------

struct LevelTargets {
  std::vector<int> cls;        // 1 iff the position's center falls in a segment
  Eigen::MatrixXd reg;         // T_l x 2 offsets in stride units (positives only)
  std::vector<int> pos_mask;   // 1 for positives
};

// Position (l, i) has center c = (i + 0.5) * 2^l; it is positive iff c lies in
// a ground-truth segment, with offsets ((c - start)/2^l, (end - c)/2^l).
inline std::vector<LevelTargets> assign_targets(const std::vector<Segment>& segments, int T) {
  std::vector<Segment> sorted = segments;
  std::sort(sorted.begin(), sorted.end());
  for (size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i].first < sorted[i - 1].second)
      throw std::invalid_argument("assign_targets: overlapping ground-truth segments");
  std::vector<LevelTargets> out;
  auto lens = pyramid_lengths(T);
  for (int l = 0; l < kPyramidLevels; ++l) {
    double stride = double(1 << l);
    LevelTargets lt;
    lt.cls.assign(lens[l], 0);
    lt.pos_mask.assign(lens[l], 0);
    lt.reg = Eigen::MatrixXd::Zero(lens[l], 2);
    for (int i = 0; i < lens[l]; ++i) {
      double center = (i + 0.5) * stride;
      for (const auto& [s, e] : sorted) {
        if (center >= s && center < e) {
          lt.cls[i] = 1;
          lt.pos_mask[i] = 1;
          lt.reg(i, 0) = (center - s) / stride;
          lt.reg(i, 1) = (e - center) / stride;
          break;
        }
      }
    }
    out.push_back(std::move(lt));
  }
  return out;
}

struct Proposal {
  double start = 0, end = 0, score = 0;
};

// Position (l, i) with offsets (ds, de) decodes to [(i-ds)*2^l, (i+de)*2^l],
// clamped to [0, T]. Keeps at most pre_nms_topk positions above the score
// threshold per level; exact duplicates keep the best score.
inline std::vector<Proposal> decode_proposals(const std::vector<Eigen::VectorXd>& cls_logits,
                                              const std::vector<Eigen::MatrixXd>& reg_offsets,
                                              double T, double score_threshold,
                                              int pre_nms_topk) {
  if (score_threshold <= 0 || score_threshold >= 1)
    throw std::invalid_argument("decode_proposals: threshold must lie in (0,1)");
  std::vector<Proposal> all;
  for (size_t l = 0; l < cls_logits.size(); ++l) {
    double stride = double(1 << l);
    std::vector<Proposal> level;
    for (Eigen::Index i = 0; i < cls_logits[l].size(); ++i) {
      double score = 1.0 / (1.0 + std::exp(-cls_logits[l][i]));
      if (score < score_threshold) continue;
      double start = (double(i) - reg_offsets[l](i, 0)) * stride;
      double end = (double(i) + reg_offsets[l](i, 1)) * stride;
      start = std::clamp(start, 0.0, T);
      end = std::clamp(end, 0.0, T);
      if (end <= start) continue;
      level.push_back({start, end, score});
    }
    std::sort(level.begin(), level.end(), [](const Proposal& a, const Proposal& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.start != b.start) return a.start < b.start;
      return (a.end - a.start) < (b.end - b.start);
    });
    if (int(level.size()) > pre_nms_topk) level.resize(size_t(pre_nms_topk));
    all.insert(all.end(), level.begin(), level.end());
  }
  // de-duplicate identical intervals, keeping the best score
  std::vector<Proposal> dedup;
  for (const auto& p : all) {
    bool merged = false;
    for (auto& q : dedup) {
      if (q.start == p.start && q.end == p.end) {
        q.score = std::max(q.score, p.score);
        merged = true;
        break;
      }
    }
    if (!merged) dedup.push_back(p);
  }
  return dedup;
}

}  // namespace mpdf::heads
