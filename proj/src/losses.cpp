#include "ilnet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ilnet {

namespace {

constexpr double kQClamp = 1e-7;

double clamp_q(double q) { return std::clamp(q, kQClamp, 1.0 - kQClamp); }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// numerically stable binary cross-entropy with logits
double bce_logit(double z, double y) {
    return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

void check_finite(double v, const char* term) {
    if (!std::isfinite(v))
        throw std::runtime_error(std::string("loss term is not finite: ") + term);
}

}  // namespace

double focal_loss(double q, int t, double gamma_focal) {
    const double p = t == 1 ? clamp_q(q) : 1.0 - clamp_q(q);
    return -std::pow(1.0 - p, gamma_focal) * std::log(p);
}

double focal_loss_grad(double q, int t, double gamma_focal) {
    const double qc = clamp_q(q);
    const double p = t == 1 ? qc : 1.0 - qc;
    double dldp;
    if (gamma_focal == 0.0) {
        dldp = -1.0 / p;
    } else {
        dldp = gamma_focal * std::pow(1.0 - p, gamma_focal - 1.0) * std::log(p) -
               std::pow(1.0 - p, gamma_focal) / p;
    }
    return t == 1 ? dldp : -dldp;
}

double smooth_l1(double x) {
    const double ax = std::abs(x);
    return ax < 1.0 ? 0.5 * x * x : ax - 0.5;
}

double smooth_l1_grad(double x) { return std::clamp(x, -1.0, 1.0); }

std::vector<BranchTarget> assign_branch_targets(const std::vector<MatchResult>& matches,
                                                double u, double mu) {
    if (!(u > 0.0 && u <= mu && mu < 1.0))
        throw std::invalid_argument("assign_branch_targets: need 0 < u <= mu < 1");
    std::vector<BranchTarget> out;
    out.reserve(matches.size());
    for (const auto& m : matches) {
        BranchTarget bt;
        bt.proposal_index = m.proposal_index;
        bt.included = m.max_iou >= u;
        bt.t = m.max_iou > mu ? 1 : 0;
        out.push_back(bt);
    }
    return out;
}

std::vector<BranchTarget> assign_branch_targets(const std::vector<MatchResult>& matches,
                                                const std::vector<std::pair<BBox, int>>& gts,
                                                double u, double mu) {
    std::vector<BranchTarget> out = assign_branch_targets(matches, u, mu);
    for (size_t i = 0; i < out.size(); ++i)
        if (matches[i].gt_index)
            out[i].class_id = gts[static_cast<size_t>(*matches[i].gt_index)].second;
    return out;
}

TrainPlan make_plan(const ModelState& state, const Tensor& image, const ImageTargets& targets,
                    const PlanConfig& pc, Rng& rng) {
    TrainPlan plan;
    const ArchConfig& a = state.arch;

    // anchor labels
    const std::vector<BBox> anchors = make_anchors(a);
    plan.anchor_label.assign(anchors.size(), 0);
    plan.anchor_gt.assign(anchors.size(), -1);
    if (!targets.boxes.empty()) {
        const auto am = match_to_gt(anchors, targets.boxes, pc.rpn_pos_iou);
        for (size_t i = 0; i < anchors.size(); ++i) {
            if (am[i].max_iou >= pc.rpn_pos_iou) {
                plan.anchor_label[i] = 1;
                plan.anchor_gt[i] = *am[i].gt_index;
            } else if (am[i].max_iou < pc.rpn_neg_iou) {
                plan.anchor_label[i] = 0;
            } else {
                plan.anchor_label[i] = -1;
            }
        }
        // the best anchor of each gt is always positive
        for (size_t g = 0; g < targets.boxes.size(); ++g) {
            int best = -1;
            double best_iou = -1.0;
            for (size_t i = 0; i < anchors.size(); ++i) {
                const double v = iou(anchors[i], targets.boxes[g].first);
                if (v > best_iou) {
                    best_iou = v;
                    best = static_cast<int>(i);
                }
            }
            if (best >= 0) {
                plan.anchor_label[static_cast<size_t>(best)] = 1;
                plan.anchor_gt[static_cast<size_t>(best)] = static_cast<int>(g);
            }
        }
    }

    // proposal set: student RPN output plus the target boxes themselves
    std::vector<BBox> all_boxes;
    for (const auto& pr : forward_proposals(state, image)) all_boxes.push_back(pr.box);
    if (pc.append_gt)
        for (const auto& t : targets.boxes) all_boxes.push_back(t.first);

    const std::vector<MatchResult> all_matches = match_to_gt(all_boxes, targets.boxes, pc.u);

    std::vector<int> fg, bg;
    for (size_t i = 0; i < all_boxes.size(); ++i)
        (all_matches[i].is_foreground ? fg : bg).push_back(static_cast<int>(i));
    rng.shuffle(fg);
    rng.shuffle(bg);
    const int want_fg = static_cast<int>(std::llround(pc.roi_batch * pc.roi_fg_fraction));
    const int n_fg = std::min<int>(static_cast<int>(fg.size()), want_fg);
    const int n_bg = std::min<int>(static_cast<int>(bg.size()), pc.roi_batch - n_fg);
    std::vector<int> chosen(fg.begin(), fg.begin() + n_fg);
    chosen.insert(chosen.end(), bg.begin(), bg.begin() + n_bg);
    std::sort(chosen.begin(), chosen.end());

    for (size_t row = 0; row < chosen.size(); ++row) {
        const int i = chosen[row];
        plan.rois.push_back(all_boxes[static_cast<size_t>(i)]);
        MatchResult m = all_matches[static_cast<size_t>(i)];
        m.proposal_index = static_cast<int>(row);
        plan.matches.push_back(m);
        // branch delta channel: the assigned class for foreground, 0 otherwise
        int sel = 0;
        if (m.is_foreground && m.gt_index)
            sel = targets.boxes[static_cast<size_t>(*m.gt_index)].second;
        plan.sel_class.push_back(sel);
    }
    plan.branch_targets = assign_branch_targets(plan.matches, targets.boxes, pc.u, pc.mu);
    return plan;
}

StreamLossResult stream_loss(const ModelState& state, const ForwardCache& cache,
                             const TrainPlan& plan, const ImageTargets& targets,
                             const LossWeights& w, Stream stream, bool want_grads) {
    const ArchConfig& a = state.arch;
    const int G = a.grid();
    const int A = a.num_anchor_scales();
    const int K = a.num_classes;
    const int R = static_cast<int>(plan.rois.size());

    StreamLossResult res;
    res.breakdown.stream = stream;

    if (want_grads) {
        res.grads.g_obj = Tensor::zeros({A, G, G});
        res.grads.g_dlt = Tensor::zeros({4 * A, G, G});
        if (R > 0) {
            res.grads.g_cls_logit = Tensor::zeros({R, K + 1});
            res.grads.g_reg = Tensor::zeros({R, 4 * K});
            if (a.branch_enabled) res.grads.g_qlogit = Tensor::zeros({R, K + 1});
        }
    }

    // ---- RPN classification ----
    const std::vector<BBox> anchors = make_anchors(a);
    int n_cls = 0, n_pos = 0;
    for (int l : plan.anchor_label) {
        if (l >= 0) ++n_cls;
        if (l == 1) ++n_pos;
    }
    double rpn_cls = 0.0, rpn_reg = 0.0;
    const size_t cell_count = static_cast<size_t>(G) * G;
    for (size_t i = 0; i < anchors.size(); ++i) {
        const int label = plan.anchor_label[i];
        if (label < 0) continue;
        // anchor order is (row, col, scale); obj channel is the scale
        const size_t cell = i / A;
        const size_t sc = i % A;
        const size_t at = sc * cell_count + cell;
        const double z = cache.rpn.obj.v[at];
        rpn_cls += bce_logit(z, label);
        if (want_grads && n_cls > 0)
            res.grads.g_obj.v[at] += (sigmoid(z) - label) / n_cls;

        if (label == 1) {
            const BBox& gt = targets.boxes[static_cast<size_t>(plan.anchor_gt[i])].first;
            const DeltaVec tgt = encode_deltas(anchors[i], gt);
            const double pred[4] = {cache.rpn.dlt.v[(4 * sc + 0) * cell_count + cell],
                                    cache.rpn.dlt.v[(4 * sc + 1) * cell_count + cell],
                                    cache.rpn.dlt.v[(4 * sc + 2) * cell_count + cell],
                                    cache.rpn.dlt.v[(4 * sc + 3) * cell_count + cell]};
            const double tv[4] = {tgt.tx, tgt.ty, tgt.tw, tgt.th};
            for (int j = 0; j < 4; ++j) {
                rpn_reg += smooth_l1(pred[j] - tv[j]);
                if (want_grads)
                    res.grads.g_dlt.v[(4 * sc + j) * cell_count + cell] +=
                        smooth_l1_grad(pred[j] - tv[j]);
            }
        }
    }
    if (n_cls > 0) rpn_cls /= n_cls;
    if (n_pos > 0) {
        rpn_reg /= n_pos;
        if (want_grads)
            for (double& v : res.grads.g_dlt.v) v /= n_pos;
    }

    // ---- RoI head ----
    double roi_cls = 0.0, roi_reg = 0.0, iou_branch = 0.0;
    int n_fg = 0;
    for (const auto& m : plan.matches)
        if (m.is_foreground) ++n_fg;

    if (R > 0) {
        for (int r = 0; r < R; ++r) {
            const MatchResult& m = plan.matches[static_cast<size_t>(r)];
            const int tgt_class =
                m.is_foreground ? targets.boxes[static_cast<size_t>(*m.gt_index)].second : K;
            const double* srow = cache.roi.cls_s.data() + static_cast<size_t>(r) * (K + 1);
            roi_cls += -std::log(std::max(srow[tgt_class], 1e-12));
            if (want_grads) {
                double* g = res.grads.g_cls_logit.data() + static_cast<size_t>(r) * (K + 1);
                for (int j = 0; j <= K; ++j)
                    g[j] += (srow[j] - (j == tgt_class ? 1.0 : 0.0)) / R;
            }

            if (m.is_foreground) {
                const BBox& gt = targets.boxes[static_cast<size_t>(*m.gt_index)].first;
                const DeltaVec tgt = encode_deltas(plan.rois[static_cast<size_t>(r)], gt);
                const double tv[4] = {tgt.tx, tgt.ty, tgt.tw, tgt.th};
                const double* pr =
                    cache.roi.reg.data() + static_cast<size_t>(r) * 4 * K + 4 * tgt_class;
                for (int j = 0; j < 4; ++j) {
                    roi_reg += smooth_l1(pr[j] - tv[j]);
                    if (want_grads && n_fg > 0)
                        res.grads.g_reg.v[static_cast<size_t>(r) * 4 * K + 4 * tgt_class + j] +=
                            smooth_l1_grad(pr[j] - tv[j]) / n_fg;
                }
            }
        }
        roi_cls /= R;
        if (n_fg > 0) roi_reg /= n_fg;

        // ---- IoU branch ----
        if (a.branch_enabled) {
            int n_inc = 0;
            for (const auto& bt : plan.branch_targets)
                if (bt.included) ++n_inc;
            if (n_inc > 0) {
                for (int r = 0; r < R; ++r) {
                    const BranchTarget& bt = plan.branch_targets[static_cast<size_t>(r)];
                    if (!bt.included) continue;
                    const int ch = bt.class_id >= 0 ? bt.class_id : 0;
                    const double q = cache.roi.q.v[static_cast<size_t>(r) * (K + 1) + ch];
                    iou_branch += focal_loss(q, bt.t, w.gamma_focal);
                    if (want_grads)
                        res.grads.g_qlogit.v[static_cast<size_t>(r) * (K + 1) + ch] +=
                            focal_loss_grad(q, bt.t, w.gamma_focal) * q * (1.0 - q) / n_inc;
                }
                iou_branch /= n_inc;
            }
        }
    }

    res.breakdown.rpn_cls = rpn_cls;
    res.breakdown.rpn_reg = rpn_reg;
    res.breakdown.roi_cls = roi_cls;
    res.breakdown.roi_reg = roi_reg;
    res.breakdown.iou_branch = iou_branch;
    check_finite(rpn_cls, "rpn_cls");
    check_finite(rpn_reg, "rpn_reg");
    check_finite(roi_cls, "roi_cls");
    check_finite(roi_reg, "roi_reg");
    check_finite(iou_branch, "iou_branch");
    return res;
}

LossBreakdown supervised_loss(const ModelState& state, const ForwardCache& cache,
                              const TrainPlan& plan, const ImageTargets& ground_truth,
                              const LossWeights& w) {
    return stream_loss(state, cache, plan, ground_truth, w, Stream::supervised, false).breakdown;
}

LossBreakdown unsupervised_loss(const ModelState& state, const ForwardCache& cache,
                                const TrainPlan& plan, const ImageTargets& pseudo,
                                const LossWeights& w) {
    return stream_loss(state, cache, plan, pseudo, w, Stream::unsupervised, false).breakdown;
}

double total_loss(const LossBreakdown& sup, const LossBreakdown& unsup, const LossWeights& w) {
    const double total = sup.weighted_total(w) + unsup.weighted_total(w);
    if (!std::isfinite(total)) throw std::runtime_error("total_loss: non-finite loss");
    return total;
}

TermShares loss_shares(const LossBreakdown& b, const LossWeights& w) {
    TermShares s;
    const double wc = b.stream == Stream::supervised ? 1.0 : w.alpha;
    const double wr = b.stream == Stream::supervised ? 1.0 : w.beta;
    const double wi = b.stream == Stream::supervised ? 1.0 : w.gamma_iou;
    const double total = wc * b.cls() + wr * b.reg() + wi * b.iou_branch;
    if (total <= 0.0) return s;
    s.cls = wc * b.cls() / total;
    s.reg = wr * b.reg() / total;
    s.iou = wi * b.iou_branch / total;
    return s;
}

}  // namespace ilnet
