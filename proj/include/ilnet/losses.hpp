#pragma once

#include <utility>
#include <vector>

#include "ilnet/geometry.hpp"
#include "ilnet/model.hpp"
#include "ilnet/rng.hpp"

namespace ilnet {

enum class Stream { supervised, unsupervised };

struct LossWeights {
    double alpha = 4.0;        // unsupervised classification weight
    double beta = 1.0;         // unsupervised regression weight
    double gamma_iou = 1.0;    // unsupervised IoU-branch weight
    double gamma_focal = 1.5;  // focal exponent
};

struct LossBreakdown {
    double rpn_cls = 0, rpn_reg = 0, roi_cls = 0, roi_reg = 0, iou_branch = 0;
    Stream stream = Stream::supervised;

    double cls() const { return rpn_cls + roi_cls; }
    double reg() const { return rpn_reg + roi_reg; }
    double unweighted_total() const { return cls() + reg() + iou_branch; }
    // supervised terms are unit-weighted; unsupervised terms carry alpha/beta/gamma_iou
    double weighted_total(const LossWeights& w) const {
        if (stream == Stream::supervised) return unweighted_total();
        return w.alpha * cls() + w.beta * reg() + w.gamma_iou * iou_branch;
    }
};

struct BranchTarget {
    int proposal_index = -1;
    int t = 0;              // 1 iff max_iou strictly exceeds mu
    int class_id = -1;      // assigned target class, -1 when unresolved
    bool included = false;  // iff foreground (max_iou >= u)
};

// Binary focal loss -(1-p_t)^g * log(p_t), p_t = q if t=1 else 1-q.
// q is clamped to [1e-7, 1-1e-7] before the log.
double focal_loss(double q, int t, double gamma_focal);
double focal_loss_grad(double q, int t, double gamma_focal);  // dL/dq

double smooth_l1(double x);       // 0.5x^2 below 1, |x|-0.5 above
double smooth_l1_grad(double x);

std::vector<BranchTarget> assign_branch_targets(const std::vector<MatchResult>& matches,
                                                double u, double mu);
// Same, with class ids resolved from the matched ground truth.
std::vector<BranchTarget> assign_branch_targets(const std::vector<MatchResult>& matches,
                                                const std::vector<std::pair<BBox, int>>& gts,
                                                double u, double mu);

// One image's target boxes: ground truth on the labeled stream, pseudo-labels
// on the unsupervised stream.
struct ImageTargets {
    std::vector<std::pair<BBox, int>> boxes;
};

struct PlanConfig {
    double u = 0.5;
    double mu = 0.75;
    int roi_batch = 32;
    double roi_fg_fraction = 0.25;
    double rpn_pos_iou = 0.5;
    double rpn_neg_iou = 0.3;
    bool append_gt = true;
};

// Frozen per-image randomness of one training step: proposal boxes, the RoI
// sample, matches, anchor labels, branch targets. With the plan fixed, the
// loss is a smooth function of the parameters, which is what the
// finite-difference gradient checks rely on.
struct TrainPlan {
    std::vector<int> anchor_label;  // 1 fg / 0 bg / -1 ignore
    std::vector<int> anchor_gt;     // matched gt index for fg anchors
    std::vector<BBox> rois;
    std::vector<MatchResult> matches;       // per roi row
    std::vector<int> sel_class;             // frozen branch delta channel per row
    std::vector<BranchTarget> branch_targets;
};

TrainPlan make_plan(const ModelState& state, const Tensor& image, const ImageTargets& targets,
                    const PlanConfig& pc, Rng& rng);

struct StreamLossResult {
    LossBreakdown breakdown;
    HeadGrads grads;  // unweighted; filled only when requested
};

// All five loss terms of one image plus, on request, the gradients at the
// head outputs. Gradients are unweighted; the caller applies stream weights
// by scaling g_obj/g_cls_logit by the cls weight, g_dlt/g_reg by the reg
// weight, g_qlogit by the branch weight.
StreamLossResult stream_loss(const ModelState& state, const ForwardCache& cache,
                             const TrainPlan& plan, const ImageTargets& targets,
                             const LossWeights& w, Stream stream, bool want_grads);

LossBreakdown supervised_loss(const ModelState& state, const ForwardCache& cache,
                              const TrainPlan& plan, const ImageTargets& ground_truth,
                              const LossWeights& w);
LossBreakdown unsupervised_loss(const ModelState& state, const ForwardCache& cache,
                                const TrainPlan& plan, const ImageTargets& pseudo,
                                const LossWeights& w);

// L = weighted supervised + weighted unsupervised. Throws on non-finite input.
double total_loss(const LossBreakdown& sup, const LossBreakdown& unsup, const LossWeights& w);

// Weighted shares of (cls, reg, iou_branch) within one breakdown's weighted
// total; sums to 1 when the total is positive, all zero otherwise.
struct TermShares {
    double cls = 0, reg = 0, iou = 0;
};
TermShares loss_shares(const LossBreakdown& b, const LossWeights& w);

}  // namespace ilnet
