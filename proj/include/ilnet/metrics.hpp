#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ilnet/geometry.hpp"

namespace ilnet {

struct APReport {
    double map = 0.0;   // mean over classes and IoU thresholds 0.50:0.05:0.95
    double ap50 = 0.0;
    double ap75 = 0.0;
    std::vector<double> per_class;  // mean over thresholds; -1 for zero-gt classes
};

struct QualityHistogram {
    std::vector<double> edges;     // bins+1 edges over [0,1]
    std::vector<int64_t> counts;
    std::vector<int64_t> wrong;    // wrong-class counts per bin
    int64_t iteration = 0;

    int64_t total() const {
        int64_t t = 0;
        for (int64_t c : counts) t += c;
        return t;
    }
};

std::vector<double> coco_iou_thresholds();  // 0.50, 0.55, ..., 0.95

// 101-point interpolated AP with greedy score-ordered matching; every gt is
// matched at most once per threshold; zero-gt classes are excluded from the
// means. dets and gts are per-image lists of equal length.
APReport evaluate_ap(const std::vector<std::vector<ScoredBox>>& dets,
                     const std::vector<std::vector<std::pair<BBox, int>>>& gts,
                     const std::vector<double>& iou_thresholds, int num_classes);

// Per pseudo-box: max IoU against the hidden gts of its image and whether its
// class disagrees with the argmax gt. pseudo/gts are per-image lists.
QualityHistogram pseudo_quality_histogram(const std::vector<std::vector<ScoredBox>>& pseudo,
                                          const std::vector<std::vector<std::pair<BBox, int>>>& gts,
                                          int bins);

struct ShareRecord {
    int64_t iteration = 0;
    double cls = 0, reg = 0, iou = 0;  // weighted term values in, shares out
};

// share_k = term_k / total per record; zero-total records are skipped.
std::vector<ShareRecord> loss_share_series(const std::vector<ShareRecord>& weighted_terms);

// (fraction of all boxes below the split, fraction of wrong-class boxes below
// the split). Bins fully below the split count; throws on an empty histogram.
std::pair<double, double> error_concentration(const QualityHistogram& hist, double split_iou);

std::string ap_report_jsonl(const APReport& r);
std::string ap_report_table(const APReport& r);
std::string histogram_csv(const QualityHistogram& h);

}  // namespace ilnet
