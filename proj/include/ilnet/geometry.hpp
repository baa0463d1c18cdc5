#pragma once

#include <optional>
#include <utility>
#include <vector>

namespace ilnet {

/**
 * Axis-aligned box, corner convention (x1,y1) top-left / (x2,y2)
 * bottom-right, continuous coordinates (no +1 pixel convention).
 * Valid boxes satisfy x1 < x2, y1 < y2, all coordinates finite.
 */
struct BBox {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    BBox() = default;
    BBox(double x1_, double y1_, double x2_, double y2_) : x1(x1_), y1(y1_), x2(x2_), y2(y2_) {}

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }
    double cx() const { return 0.5 * (x1 + x2); }
    double cy() const { return 0.5 * (y1 + y2); }
    bool valid() const;
};

/// Box deltas in the standard two-stage parameterization; tw/th are log-space ratios.
struct DeltaVec {
    double tx = 0, ty = 0, tw = 0, th = 0;
};

/// Detection candidate: box + confidence + class. q_iou is the IoU-quality
/// score attached by the detector for downstream filtering (1 when absent).
struct ScoredBox {
    BBox box;
    double score = 0;
    int class_id = 0;
    double q_iou = 1.0;
};

/// Result of matching one proposal against a ground-truth set.
struct MatchResult {
    int proposal_index = -1;
    double max_iou = 0.0;
    std::optional<int> gt_index;  // empty iff the image has no ground truth
    bool is_foreground = false;
};

/// Intersection-over-union. Throws std::invalid_argument on degenerate or
/// non-finite boxes. Symmetric, in [0,1], 0 for disjoint boxes.
double iou(const BBox& a, const BBox& b);

/// Encode target relative to proposal: tx=(cx_t-cx_p)/w_p, ty likewise,
/// tw=log(w_t/w_p), th=log(h_t/h_p).
DeltaVec encode_deltas(const BBox& proposal, const BBox& target);

/// Inverse of encode_deltas. Throws std::overflow_error if exp(tw) or
/// exp(th) is non-finite or the decoded box degenerates.
BBox decode_deltas(const BBox& proposal, const DeltaVec& d);

/// Same, then clamps the result into [0,W]x[0,H] keeping a minimal extent.
BBox decode_deltas_clamped(const BBox& proposal, const DeltaVec& d, double img_w, double img_h);

/// Greedy score-descending NMS. Boxes of different class_id never suppress
/// each other; a survivor suppresses later boxes with IoU strictly greater
/// than iou_threshold. Ties on equal score break by lower original index.
/// Output is sorted by descending score.
std::vector<ScoredBox> nms(const std::vector<ScoredBox>& dets, double iou_threshold);

/// For each proposal: max IoU over all gts, argmax gt index, foreground
/// iff max_iou >= u. With an empty gt list every proposal is background
/// with max_iou 0 and no gt index.
std::vector<MatchResult> match_to_gt(const std::vector<BBox>& proposals,
                                     const std::vector<std::pair<BBox, int>>& gts,
                                     double u);

}  // namespace ilnet
