#pragma once

// Classification metrics (ACC / AP / AUC) and temporal localization metrics
// (segment IoU, greedy NMS, AP at IoU thresholds, mAP).

#include <map>
#include <string>
#include <vector>

#include "mpdf/heads.hpp"

namespace mpdf::eval {

using heads::Proposal;

struct Interval {
  double start = 0, end = 0;
};

struct LocalizationResult {
  std::map<double, double> ap;  // IoU threshold -> AP
  double map_mean = 0;          // mean over the evaluated thresholds
};

double segment_iou(const Interval& a, const Interval& b);

// Greedy: sort by score descending (ties: earlier start, then shorter), keep,
// suppress overlaps with IoU >= thresh against any kept proposal.
std::vector<Proposal> nms(std::vector<Proposal> proposals, double iou_thresh);

// Global score ranking, greedy one-to-one matching per sample at IoU >=
// thresh, all-point interpolated precision-recall area.
double ap_at_iou(const std::map<std::string, std::vector<Proposal>>& proposals_by_sample,
                 const std::map<std::string, std::vector<Interval>>& gts_by_sample,
                 double thresh);

LocalizationResult localization_metrics(
    const std::map<std::string, std::vector<Proposal>>& proposals_by_sample,
    const std::map<std::string, std::vector<Interval>>& gts_by_sample,
    const std::vector<double>& thresholds = {0.5, 0.75, 0.95});

// Rank-statistic AUC with midranks for ties; throws if labels are single-class.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Step-wise precision-recall average precision.
double average_precision(const std::vector<double>& scores, const std::vector<int>& labels);

double accuracy(const std::vector<double>& scores, const std::vector<int>& labels,
                double threshold = 0.5);

}  // namespace mpdf::eval
