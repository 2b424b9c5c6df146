#include "mpdf/eval.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace mpdf::eval {

double segment_iou(const Interval& a, const Interval& b) {
  double inter = std::min(a.end, b.end) - std::max(a.start, b.start);
  if (inter <= 0) return 0.0;
  double uni = (a.end - a.start) + (b.end - b.start) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

namespace {

bool score_order(const Proposal& a, const Proposal& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.start != b.start) return a.start < b.start;
  return (a.end - a.start) < (b.end - b.start);
}

}  // namespace

std::vector<Proposal> nms(std::vector<Proposal> proposals, double iou_thresh) {
  if (iou_thresh <= 0 || iou_thresh >= 1)
    throw std::invalid_argument("nms: iou threshold must lie in (0,1)");
  std::sort(proposals.begin(), proposals.end(), score_order);
  std::vector<Proposal> kept;
  for (const auto& p : proposals) {
    bool suppressed = false;
    for (const auto& q : kept) {
      if (segment_iou({p.start, p.end}, {q.start, q.end}) >= iou_thresh) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(p);
  }
  return kept;
}

double ap_at_iou(const std::map<std::string, std::vector<Proposal>>& proposals_by_sample,
                 const std::map<std::string, std::vector<Interval>>& gts_by_sample,
                 double thresh) {
  std::size_t total_gt = 0;
  for (const auto& [id, gts] : gts_by_sample) total_gt += gts.size();
  if (total_gt == 0) return 0.0;

  struct Ranked {
    std::string sample_id;
    Proposal p;
  };
  std::vector<Ranked> ranked;
  for (const auto& [id, props] : proposals_by_sample)
    for (const auto& p : props) ranked.push_back({id, p});
  if (ranked.empty()) return 0.0;
  std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.p.score != b.p.score) return a.p.score > b.p.score;
    if (a.sample_id != b.sample_id) return a.sample_id < b.sample_id;
    return score_order(a.p, b.p);
  });

  std::map<std::string, std::vector<bool>> matched;
  for (const auto& [id, gts] : gts_by_sample) matched[id].assign(gts.size(), false);

  std::vector<int> tp(ranked.size(), 0);
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    auto it = gts_by_sample.find(ranked[k].sample_id);
    if (it == gts_by_sample.end()) continue;
    const auto& gts = it->second;
    auto& used = matched[ranked[k].sample_id];
    double best_iou = 0.0;
    int best = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g]) continue;
      double iou = segment_iou({ranked[k].p.start, ranked[k].p.end}, gts[g]);
      if (iou > best_iou) {
        best_iou = iou;
        best = int(g);
      }
    }
    if (best >= 0 && best_iou >= thresh) {
      tp[k] = 1;
      used[size_t(best)] = true;
    }
  }

  // precision-recall points, then all-point interpolation
  std::vector<double> precision(ranked.size()), recall(ranked.size());
  int cum_tp = 0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    cum_tp += tp[k];
    precision[k] = double(cum_tp) / double(k + 1);
    recall[k] = double(cum_tp) / double(total_gt);
  }
  for (int k = int(ranked.size()) - 2; k >= 0; --k)
    precision[size_t(k)] = std::max(precision[size_t(k)], precision[size_t(k) + 1]);

  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  return ap;
}

LocalizationResult localization_metrics(
    const std::map<std::string, std::vector<Proposal>>& proposals_by_sample,
    const std::map<std::string, std::vector<Interval>>& gts_by_sample,
    const std::vector<double>& thresholds) {
  LocalizationResult out;
  double acc = 0;
  for (double th : thresholds) {
    double ap = ap_at_iou(proposals_by_sample, gts_by_sample, th);
    out.ap[th] = ap;
    acc += ap;
  }
  out.map_mean = thresholds.empty() ? 0.0 : acc / double(thresholds.size());
  return out;
}

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw std::invalid_argument("roc_auc: bad inputs");
  std::size_t pos = 0, neg = 0;
  for (int l : labels) (l ? pos : neg)++;
  if (pos == 0 || neg == 0)
    throw std::invalid_argument("roc_auc: needs both classes present");

  // midrank statistic: AUC = (sum of positive ranks - P(P+1)/2) / (P*N)
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(scores.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    double mid = (double(i) + double(j)) / 2.0 + 1.0;  // 1-based midrank
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double pos_rank_sum = 0;
  for (std::size_t k = 0; k < scores.size(); ++k)
    if (labels[k]) pos_rank_sum += rank[k];
  return (pos_rank_sum - double(pos) * double(pos + 1) / 2.0) / (double(pos) * double(neg));
}

double average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw std::invalid_argument("average_precision: bad inputs");
  std::size_t pos = 0;
  for (int l : labels) pos += size_t(l != 0);
  if (pos == 0) return 0.0;

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  // step through distinct thresholds so ties are handled as one group
  double ap = 0.0;
  std::size_t k = 0, tp = 0, seen = 0;
  double prev_recall = 0.0;
  while (k < order.size()) {
    std::size_t j = k;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[k]]) ++j;
    for (std::size_t m = k; m <= j; ++m) {
      tp += size_t(labels[order[m]] != 0);
      ++seen;
    }
    double precision = double(tp) / double(seen);
    double recall = double(tp) / double(pos);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    k = j + 1;
  }
  return ap;
}

double accuracy(const std::vector<double>& scores, const std::vector<int>& labels,
                double threshold) {
  if (scores.size() != labels.size() || scores.empty())
    throw std::invalid_argument("accuracy: bad inputs");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    correct += size_t((scores[i] >= threshold ? 1 : 0) == labels[i]);
  return double(correct) / double(scores.size());
}

}  // namespace mpdf::eval
