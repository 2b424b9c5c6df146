#pragma once

// Full model assembly: frame-wise encoders, the three masked-prediction
// modules, and a task head. The classifier runs feature mixing over (C, A, V)
// and the conv classification head; the localizer feeds concat(A, V, C) into
// the pyramid head. Both share the backbone layout.

#include <memory>
#include <optional>

#include "mpdf/encoders.hpp"
#include "mpdf/heads.hpp"
#include "mpdf/losses.hpp"
#include "mpdf/maskedpred.hpp"
#include "mpdf/mixing.hpp"
#include "mpdf/synthdata.hpp"

namespace mpdf::model {

using ad::Mat;
using ad::Tape;
using ad::Var;
using losses::ContrastTerm;
using losses::LossBreakdown;

// A sample converted to the scalar type of the model, with frame labels ready
// for the contrastive loss.
template <typename S>
struct LoadedSample {
  Mat<S> visual;  // T_v x D_v
  Mat<S> audio;   // T_a x B
  int label = 0;
  bool audio_fake = false;
  bool visual_fake = false;
  std::vector<synthdata::Segment> segments;
  std::vector<int> frame_labels;
  std::string id;
  std::string category;
};

template <typename S>
LoadedSample<S> load_for_model(const synthdata::SyntheticSample& s,
                               const std::string& category = "") {
  LoadedSample<S> out;
  out.visual = s.visual_raw.template cast<S>();
  out.audio = s.audio_raw.template cast<S>();
  out.label = s.label;
  out.audio_fake = s.audio_fake;
  out.visual_fake = s.visual_fake;
  out.segments = s.segments;
  out.frame_labels = synthdata::frame_labels_from_segments(s.segments, int(s.visual_raw.rows()));
  out.id = s.sample_id;
  out.category = category;
  return out;
}

template <typename S>
struct BackboneOut {
  mp::MaskedPredOutput<S> audio{};   // A stream (T x f)
  mp::MaskedPredOutput<S> visual{};  // V stream (T x f)
  mp::MaskedPredOutput<S> cross{};   // C stream (T x 2f)
  bool has_audio = false, has_visual = false, has_cross = false;
};

template <typename S>
struct Backbone {
  std::optional<enc::VisualEncoder<S>> enc_v;
  std::optional<enc::AudioEncoder<S>> enc_a;
  std::optional<enc::CrossModalFusion<S>> fusion;
  std::optional<mp::MaskedPredModule<S>> mp_a, mp_v, mp_c;

  Backbone() = default;
  Backbone(nn::ParamStore<S>& ps, const ModelConfig& cfg) {
    bool need_visual = cfg.uses_feature('V') || cfg.uses_feature('C');
    bool need_audio = cfg.uses_feature('A') || cfg.uses_feature('C');
    if (need_visual) enc_v.emplace(ps, cfg);
    if (need_audio) enc_a.emplace(ps, cfg);
    if (cfg.uses_feature('C')) fusion.emplace(ps, cfg);
    if (cfg.uses_feature('A')) mp_a.emplace(ps, "mp_a", cfg.f, cfg);
    if (cfg.uses_feature('V')) mp_v.emplace(ps, "mp_v", cfg.f, cfg);
    if (cfg.uses_feature('C')) mp_c.emplace(ps, "mp_c", 2 * cfg.f, cfg);
  }

  BackboneOut<S> operator()(Tape<S>& t, Var<S> x_v, Var<S> x_a,
                            nn::AttnProbe<S>* probe = nullptr) const {
    BackboneOut<S> out;
    Var<S> v = enc_v ? (*enc_v)(t, x_v) : nullptr;
    Var<S> a = enc_a ? (*enc_a)(t, x_a) : nullptr;
    if (mp_a) {
      out.audio = (*mp_a)(t, a, probe);
      out.has_audio = true;
    }
    if (mp_v) {
      out.visual = (*mp_v)(t, v, probe);
      out.has_visual = true;
    }
    if (mp_c) {
      Var<S> c = (*fusion)(t, v, a);
      out.cross = (*mp_c)(t, c, probe);
      out.has_cross = true;
    }
    return out;
  }
};

template <typename S>
std::vector<ContrastTerm<S>> contrast_terms(Tape<S>& t, const BackboneOut<S>& bb,
                                            const std::vector<int>& frame_labels,
                                            double margin) {
  std::vector<ContrastTerm<S>> terms;
  if (bb.has_audio)
    terms.push_back(
        {"a", losses::contrastive_frame_loss(t, bb.audio.predicted, bb.audio.actual,
                                             frame_labels, margin)});
  if (bb.has_visual)
    terms.push_back(
        {"v", losses::contrastive_frame_loss(t, bb.visual.predicted, bb.visual.actual,
                                             frame_labels, margin)});
  if (bb.has_cross)
    terms.push_back(
        {"av", losses::contrastive_frame_loss(t, bb.cross.predicted, bb.cross.actual,
                                              frame_labels, margin)});
  return terms;
}

template <typename S>
class ClassifierModel {
 public:
  explicit ClassifierModel(const ModelConfig& cfg) : cfg_(cfg), params_(cfg.seed) {
    cfg_.validate();
    backbone_ = Backbone<S>(params_, cfg_);
    int width = 0;
    if (cfg_.full_feature_set()) {
      mixing_.emplace(params_, cfg_);
      width = 2 * cfg_.f;
    } else {
      width = (cfg_.uses_feature('C') ? 2 * cfg_.f : 0) +
              (cfg_.uses_feature('V') ? cfg_.f : 0) + (cfg_.uses_feature('A') ? cfg_.f : 0);
      single_.emplace(params_, cfg_, width);
    }
    head_ = heads::ClassifyHead<S>(params_, cfg_, width);
  }

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore<S>& params() { return params_; }

  struct Forward {
    Var<S> logit = nullptr;
    BackboneOut<S> backbone;
  };

  Forward forward(Tape<S>& t, const LoadedSample<S>& sample,
                  nn::AttnProbe<S>* probe = nullptr) const {
    Var<S> x_v = t.leaf(sample.visual);
    Var<S> x_a = t.leaf(sample.audio);
    return forward_from_vars(t, x_v, x_a, probe);
  }

  BackboneOut<S> backbone_forward(Tape<S>& t, const LoadedSample<S>& sample) const {
    return backbone_(t, t.leaf(sample.visual), t.leaf(sample.audio));
  }

  Forward forward_from_vars(Tape<S>& t, Var<S> x_v, Var<S> x_a,
                            nn::AttnProbe<S>* probe = nullptr) const {
    Forward out;
    out.backbone = backbone_(t, x_v, x_a, probe);
    std::vector<Var<S>> levels;
    if (mixing_) {
      levels = (*mixing_)(t, out.backbone.cross.attended, out.backbone.audio.attended,
                          out.backbone.visual.attended);
    } else {
      std::vector<Var<S>> streams;
      if (cfg_.uses_feature('C')) streams.push_back(out.backbone.cross.attended);
      if (cfg_.uses_feature('V')) streams.push_back(out.backbone.visual.attended);
      if (cfg_.uses_feature('A')) streams.push_back(out.backbone.audio.attended);
      Var<S> x = streams.size() == 1 ? streams[0] : ad::concat_cols(t, streams);
      levels = (*single_)(t, x);
    }
    out.logit = head_(t, levels);
    return out;
  }

  std::pair<Var<S>, LossBreakdown> loss(Tape<S>& t, const LoadedSample<S>& sample) const {
    Forward fwd = forward(t, sample);
    std::vector<ContrastTerm<S>> terms;
    if (cfg_.contrastive_enabled)
      terms = contrast_terms(t, fwd.backbone, sample.frame_labels, cfg_.margin);
    return losses::total_cls_loss<S>(t, fwd.logit, sample.label, terms);
  }

  double predict_score(const LoadedSample<S>& sample) const {
    Tape<S> t;
    Forward fwd = forward(t, sample);
    double logit = double(fwd.logit->val(0, 0));
    return 1.0 / (1.0 + std::exp(-logit));
  }

 private:
  ModelConfig cfg_;
  nn::ParamStore<S> params_;
  Backbone<S> backbone_;
  std::optional<mix::FeatureMixing<S>> mixing_;
  std::optional<mix::SingleStreamLevels<S>> single_;
  heads::ClassifyHead<S> head_;
};

template <typename S>
class LocalizerModel {
 public:
  explicit LocalizerModel(const ModelConfig& cfg) : cfg_(cfg), params_(cfg.seed) {
    cfg_.validate();
    if (!cfg_.full_feature_set())
      throw std::invalid_argument("localizer requires the full C+V+A feature set");
    backbone_ = Backbone<S>(params_, cfg_);
    head_ = heads::PyramidHead<S>(params_, cfg_);
  }

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore<S>& params() { return params_; }

  struct Forward {
    heads::PyramidOutputs<S> outputs;
    BackboneOut<S> backbone;
  };

  Forward forward(Tape<S>& t, const LoadedSample<S>& sample) const {
    Var<S> x_v = t.leaf(sample.visual);
    Var<S> x_a = t.leaf(sample.audio);
    return forward_from_vars(t, x_v, x_a);
  }

  BackboneOut<S> backbone_forward(Tape<S>& t, const LoadedSample<S>& sample) const {
    return backbone_(t, t.leaf(sample.visual), t.leaf(sample.audio));
  }

  Forward forward_from_vars(Tape<S>& t, Var<S> x_v, Var<S> x_a) const {
    Forward out;
    out.backbone = backbone_(t, x_v, x_a);
    out.outputs = head_(t, out.backbone.audio.attended, out.backbone.visual.attended,
                        out.backbone.cross.attended);
    return out;
  }

  std::pair<Var<S>, LossBreakdown> loss(Tape<S>& t, const LoadedSample<S>& sample) const {
    Forward fwd = forward(t, sample);
    auto targets = heads::assign_targets(sample.segments, int(sample.visual.rows()));
    std::vector<ContrastTerm<S>> terms;
    if (cfg_.contrastive_enabled)
      terms = contrast_terms(t, fwd.backbone, sample.frame_labels, cfg_.margin);
    losses::RegLossParams params{cfg_.lambda_reg, cfg_.lambda_rec, cfg_.lambda_scls,
                                 cfg_.focal_alpha, cfg_.focal_gamma};
    return losses::total_reg_loss<S>(t, fwd.outputs, targets, sample.label, terms, params);
  }

  struct Prediction {
    std::vector<heads::Proposal> proposals;
    double video_score = 0;
  };

  Prediction predict(const LoadedSample<S>& sample) const {
    Tape<S> t;
    Forward fwd = forward(t, sample);
    std::vector<Eigen::VectorXd> logits;
    std::vector<Eigen::MatrixXd> regs;
    for (auto* v : fwd.outputs.cls_logits)
      logits.push_back(v->val.template cast<double>().col(0));
    for (auto* v : fwd.outputs.reg_offsets) regs.push_back(v->val.template cast<double>());
    Prediction out;
    out.proposals = heads::decode_proposals(logits, regs, double(sample.visual.rows()),
                                            cfg_.score_threshold, cfg_.pre_nms_topk);
    double vl = double(fwd.outputs.video_logit->val(0, 0));
    out.video_score = 1.0 / (1.0 + std::exp(-vl));
    return out;
  }

 private:
  ModelConfig cfg_;
  nn::ParamStore<S> params_;
  Backbone<S> backbone_;
  heads::PyramidHead<S> head_;
};

}  // namespace mpdf::model
