#pragma once

// Training objectives: the frame-level margin contrastive loss shared by both
// pipelines, the classification total (BCE + mean contrastive), and the
// localization total (focal + IoU regression + reconstruction + video-level
// focal + mean contrastive).

#include <map>
#include <string>
#include <vector>

#include "mpdf/heads.hpp"
#include "mpdf/nn.hpp"

namespace mpdf::losses {

using ad::Mat;
using ad::Tape;
using ad::Var;

struct LossBreakdown {
  double total = 0;
  std::map<std::string, double> components;
};

// Per frame t: D_t = ||P_t - E_t||_2 / sqrt(d); real frames contribute D^2,
// fake frames max(0, m - D)^2; mean over frames.
template <typename S>
Var<S> contrastive_frame_loss(Tape<S>& t, Var<S> p, Var<S> e,
                              const std::vector<int>& frame_labels, double margin) {
  Eigen::Index T = p->val.rows(), d = p->val.cols();
  if (T == 0) throw std::invalid_argument("contrastive loss: empty sequence");
  if (e->val.rows() != T || e->val.cols() != d)
    throw std::invalid_argument("contrastive loss: shape mismatch");
  if (Eigen::Index(frame_labels.size()) != T)
    throw std::invalid_argument("contrastive loss: label length mismatch");
  if (margin <= 0) throw std::invalid_argument("contrastive loss: margin must be positive");

  Var<S> diff = ad::sub(t, p, e);
  Var<S> d2 = ad::scale(t, ad::row_sum(t, ad::mul(t, diff, diff)), S(1) / S(d));  // T x 1 = D^2
  Mat<S> real_mask(T, 1), fake_mask(T, 1);
  for (Eigen::Index i = 0; i < T; ++i) {
    real_mask(i, 0) = frame_labels[i] ? S(0) : S(1);
    fake_mask(i, 0) = frame_labels[i] ? S(1) : S(0);
  }
  Var<S> real_term = ad::cmul_const(t, d2, real_mask);
  Var<S> dist = ad::sqrt_elem(t, d2);
  Var<S> hinge = ad::relu(t, ad::affine(t, dist, S(-1), S(margin)));  // max(0, m - D)
  Var<S> fake_term = ad::cmul_const(t, ad::mul(t, hinge, hinge), fake_mask);
  return ad::scale(t, ad::sum_all(t, ad::add(t, real_term, fake_term)), S(1) / S(T));
}

// Numerically stable BCE-with-logits against a hard label.
template <typename S>
Var<S> bce_with_logit(Tape<S>& t, Var<S> logit, int label) {
  Var<S> sp = ad::softplus(t, logit);  // log(1 + e^x)
  if (label == 0) return sp;
  return ad::sub(t, sp, logit);  // log(1 + e^x) - x
}

// Sigmoid focal loss over a column of logits; returns the SUM over positions.
// Alpha weights positives, (1 - alpha) negatives; gamma = 0 reduces each term
// to alpha-weighted BCE.
template <typename S>
Var<S> focal_loss_sum(Tape<S>& t, Var<S> logits, const std::vector<int>& labels, double alpha,
                      double gamma) {
  Eigen::Index n = logits->val.rows();
  if (Eigen::Index(labels.size()) != n)
    throw std::invalid_argument("focal loss: label length mismatch");
  Mat<S> pos(n, 1), neg(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    pos(i, 0) = labels[i] ? S(alpha) : S(0);
    neg(i, 0) = labels[i] ? S(0) : S(1 - alpha);
  }
  Var<S> p = ad::sigmoid(t, logits);
  Var<S> log_p = ad::scale(t, ad::softplus(t, ad::scale(t, logits, S(-1))), S(-1));
  Var<S> log_1mp = ad::scale(t, ad::softplus(t, logits), S(-1));
  Var<S> one_minus_p = ad::affine(t, p, S(-1), S(1));
  // positive: -alpha (1-p)^gamma log p ; negative: -(1-alpha) p^gamma log(1-p)
  Var<S> pos_term = ad::mul(t, ad::pow_elem(t, one_minus_p, S(gamma)), ad::scale(t, log_p, S(-1)));
  Var<S> neg_term = ad::mul(t, ad::pow_elem(t, p, S(gamma)), ad::scale(t, log_1mp, S(-1)));
  Var<S> weighted =
      ad::add(t, ad::cmul_const(t, pos_term, pos), ad::cmul_const(t, neg_term, neg));
  return ad::sum_all(t, weighted);
}

template <typename S>
Var<S> mse_loss(Tape<S>& t, Var<S> a, Var<S> b) {
  Var<S> d = ad::sub(t, a, b);
  return ad::mean_all(t, ad::mul(t, d, d));
}

// Named contrastive term (name is one of "a", "v", "av").
template <typename S>
struct ContrastTerm {
  std::string name;
  Var<S> value;
};

template <typename S>
std::pair<Var<S>, LossBreakdown> total_cls_loss(Tape<S>& t, Var<S> logit, int label,
                                                const std::vector<ContrastTerm<S>>& contrasts) {
  Var<S> bce = bce_with_logit(t, logit, label);
  LossBreakdown breakdown;
  breakdown.components["bce"] = double(bce->val(0, 0));
  Var<S> total = bce;
  if (!contrasts.empty()) {
    Var<S> acc = nullptr;
    for (const auto& c : contrasts) {
      breakdown.components["contrast_" + c.name] = double(c.value->val(0, 0));
      acc = acc ? ad::add(t, acc, c.value) : c.value;
    }
    total = ad::add(t, total, ad::scale(t, acc, S(1) / S(contrasts.size())));
  }
  breakdown.total = double(total->val(0, 0));
  return {total, breakdown};
}

// Eq. 1 with exactly the three modality terms.
template <typename S>
std::pair<Var<S>, LossBreakdown> total_cls_loss(Tape<S>& t, Var<S> logit, int label,
                                                Var<S> contrast_a, Var<S> contrast_v,
                                                Var<S> contrast_av) {
  return total_cls_loss<S>(t, logit, label,
                           {{"a", contrast_a}, {"v", contrast_v}, {"av", contrast_av}});
}

struct RegLossParams {
  double lambda_reg = 2.0;
  double lambda_rec = 1.0;
  double lambda_scls = 0.1;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
};

// Localization total. cls_U: focal over all pyramid positions, normalized by
// the positive count; reg_U: mean (1 - IoU) between decoded and ground-truth
// segments over positives (decoding is left unclamped so the gradient does
// not die at the sequence borders); rec_U: MSE(F, F-hat); scls_U: focal on the
// video logit.
template <typename S>
std::pair<Var<S>, LossBreakdown> total_reg_loss(Tape<S>& t,
                                                const heads::PyramidOutputs<S>& outputs,
                                                const std::vector<heads::LevelTargets>& targets,
                                                int video_label,
                                                const std::vector<ContrastTerm<S>>& contrasts,
                                                const RegLossParams& params) {
  if (targets.size() != outputs.cls_logits.size())
    throw std::invalid_argument("total_reg_loss: target/output level mismatch");

  int npos = 0;
  for (const auto& lt : targets)
    for (int m : lt.pos_mask) npos += m;

  // focal classification over every pyramid position
  Var<S> cls_sum = nullptr;
  for (size_t l = 0; l < targets.size(); ++l) {
    Var<S> s = focal_loss_sum(t, outputs.cls_logits[l], targets[l].cls, params.focal_alpha,
                              params.focal_gamma);
    cls_sum = cls_sum ? ad::add(t, cls_sum, s) : s;
  }
  Var<S> cls_u = ad::scale(t, cls_sum, S(1) / S(std::max(1, npos)));

  // IoU regression over positive positions
  Var<S> reg_u = nullptr;
  if (npos > 0) {
    Var<S> acc = nullptr;
    for (size_t l = 0; l < targets.size(); ++l) {
      const auto& lt = targets[l];
      Eigen::Index Tl = outputs.reg_offsets[l]->val.rows();
      bool any = false;
      for (int m : lt.pos_mask) any = any || m;
      if (!any) continue;
      double stride = double(1 << l);
      Mat<S> idx(Tl, 1), gs(Tl, 1), ge(Tl, 1), mask(Tl, 1);
      for (Eigen::Index i = 0; i < Tl; ++i) {
        idx(i, 0) = S(i);
        mask(i, 0) = S(lt.pos_mask[i]);
        double center = (double(i) + 0.5) * stride;
        gs(i, 0) = S(lt.pos_mask[i] ? center - lt.reg(i, 0) * stride : 0.0);
        ge(i, 0) = S(lt.pos_mask[i] ? center + lt.reg(i, 1) * stride : 1.0);
      }
      Var<S> ds = ad::slice_cols(t, outputs.reg_offsets[l], 0, 1);
      Var<S> de = ad::slice_cols(t, outputs.reg_offsets[l], 1, 1);
      // decoded (unclamped): [(i - ds) * stride, (i + de) * stride]
      Var<S> ps = ad::scale(t, ad::add_const(t, ad::scale(t, ds, S(-1)), idx), S(stride));
      Var<S> pe = ad::scale(t, ad::add_const(t, de, idx), S(stride));
      Var<S> inter = ad::relu(t, ad::sub(t, ad::min_const(t, pe, ge), ad::max_const(t, ps, gs)));
      Var<S> pred_len = ad::sub(t, pe, ps);
      Mat<S> gt_len = ge - gs;
      Var<S> uni = ad::sub(t, ad::add_const(t, pred_len, gt_len), inter);
      Var<S> iou = ad::div(t, inter, uni);
      Var<S> one_minus = ad::affine(t, iou, S(-1), S(1));
      Var<S> masked = ad::cmul_const(t, one_minus, mask);
      Var<S> s = ad::sum_all(t, masked);
      acc = acc ? ad::add(t, acc, s) : s;
    }
    reg_u = ad::scale(t, acc, S(1) / S(npos));
  }

  Var<S> rec_u = mse_loss(t, outputs.features, outputs.reconstructed);
  Var<S> scls_u = focal_loss_sum(t, outputs.video_logit, {video_label}, params.focal_alpha,
                                 params.focal_gamma);

  LossBreakdown breakdown;
  breakdown.components["cls_U"] = double(cls_u->val(0, 0));
  breakdown.components["reg_U"] = reg_u ? double(reg_u->val(0, 0)) : 0.0;
  breakdown.components["rec_U"] = double(rec_u->val(0, 0));
  breakdown.components["scls_U"] = double(scls_u->val(0, 0));

  Var<S> total = cls_u;
  if (reg_u) total = ad::add(t, total, ad::scale(t, reg_u, S(params.lambda_reg)));
  total = ad::add(t, total, ad::scale(t, rec_u, S(params.lambda_rec)));
  total = ad::add(t, total, ad::scale(t, scls_u, S(params.lambda_scls)));
  if (!contrasts.empty()) {
    Var<S> acc = nullptr;
    for (const auto& c : contrasts) {
      breakdown.components["contrast_" + c.name] = double(c.value->val(0, 0));
      acc = acc ? ad::add(t, acc, c.value) : c.value;
    }
    total = ad::add(t, total, ad::scale(t, acc, S(1) / S(contrasts.size())));
  }
  breakdown.total = double(total->val(0, 0));
  return {total, breakdown};
}

// ---- value-level primitives (used directly by unit checks) ----

inline double bce_loss(double logit, int label) {
  double sp = logit > 30 ? logit : std::log1p(std::exp(logit));
  return label ? sp - logit : sp;
}

inline double focal_loss(double logit, int label, double alpha, double gamma) {
  double p = 1.0 / (1.0 + std::exp(-logit));
  double log_p = -(logit > 30 ? 0.0 : std::log1p(std::exp(-logit)));
  double log_1mp = -(logit < -30 ? 0.0 : std::log1p(std::exp(logit)));
  if (label) return -alpha * std::pow(1 - p, gamma) * log_p;
  return -(1 - alpha) * std::pow(p, gamma) * log_1mp;
}

inline double iou_reg_loss(double s1, double e1, double s2, double e2) {
  double inter = std::max(0.0, std::min(e1, e2) - std::max(s1, s2));
  double uni = (e1 - s1) + (e2 - s2) - inter;
  return uni > 0 ? 1.0 - inter / uni : 1.0;
}

inline double reconstruction_loss(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).squaredNorm() / double(a.size());
}

}  // namespace mpdf::losses
