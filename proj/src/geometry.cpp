#include "ilnet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ilnet {

bool BBox::valid() const {
    return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
           x1 < x2 && y1 < y2;
}

static void require_valid(const BBox& b, const char* who) {
    if (!b.valid()) throw std::invalid_argument(std::string(who) + ": degenerate or non-finite box");
}

double iou(const BBox& a, const BBox& b) {
    require_valid(a, "iou");
    require_valid(b, "iou");
    const double ix1 = std::max(a.x1, b.x1);
    const double iy1 = std::max(a.y1, b.y1);
    const double ix2 = std::min(a.x2, b.x2);
    const double iy2 = std::min(a.y2, b.y2);
    const double iw = ix2 - ix1;
    const double ih = iy2 - iy1;
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return inter / uni;
}

DeltaVec encode_deltas(const BBox& proposal, const BBox& target) {
    require_valid(proposal, "encode_deltas");
    require_valid(target, "encode_deltas");
    DeltaVec d;
    d.tx = (target.cx() - proposal.cx()) / proposal.width();
    d.ty = (target.cy() - proposal.cy()) / proposal.height();
    d.tw = std::log(target.width() / proposal.width());
    d.th = std::log(target.height() / proposal.height());
    return d;
}

BBox decode_deltas(const BBox& proposal, const DeltaVec& d) {
    require_valid(proposal, "decode_deltas");
    if (!std::isfinite(d.tx) || !std::isfinite(d.ty) || !std::isfinite(d.tw) || !std::isfinite(d.th))
        throw std::invalid_argument("decode_deltas: non-finite deltas");
    const double ew = std::exp(d.tw);
    const double eh = std::exp(d.th);
    if (!std::isfinite(ew) || !std::isfinite(eh))
        throw std::overflow_error("decode_deltas: exp(tw/th) overflow");
    const double w = proposal.width() * ew;
    const double h = proposal.height() * eh;
    const double cx = proposal.cx() + d.tx * proposal.width();
    const double cy = proposal.cy() + d.ty * proposal.height();
    BBox out{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
    if (!out.valid()) throw std::overflow_error("decode_deltas: decoded box is degenerate");
    return out;
}

BBox decode_deltas_clamped(const BBox& proposal, const DeltaVec& d, double img_w, double img_h) {
    BBox b = decode_deltas(proposal, d);
    constexpr double kMinExtent = 1e-3;
    b.x1 = std::clamp(b.x1, 0.0, img_w - kMinExtent);
    b.y1 = std::clamp(b.y1, 0.0, img_h - kMinExtent);
    b.x2 = std::clamp(b.x2, kMinExtent, img_w);
    b.y2 = std::clamp(b.y2, kMinExtent, img_h);
    if (b.x2 - b.x1 < kMinExtent) b.x2 = b.x1 + kMinExtent;
    if (b.y2 - b.y1 < kMinExtent) b.y2 = b.y1 + kMinExtent;
    return b;
}

std::vector<ScoredBox> nms(const std::vector<ScoredBox>& dets, double iou_threshold) {
    for (const auto& d : dets) {
        require_valid(d.box, "nms");
        if (!std::isfinite(d.score)) throw std::invalid_argument("nms: non-finite score");
    }
    std::vector<int> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
        return a < b;  // tie: lower original index first
    });
    std::vector<ScoredBox> kept;
    kept.reserve(dets.size());
    for (int idx : order) {
        const ScoredBox& cand = dets[static_cast<size_t>(idx)];
        bool suppressed = false;
        for (const auto& k : kept) {
            if (k.class_id != cand.class_id) continue;
            if (iou(k.box, cand.box) > iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(cand);
    }
    return kept;
}

std::vector<MatchResult> match_to_gt(const std::vector<BBox>& proposals,
                                     const std::vector<std::pair<BBox, int>>& gts,
                                     double u) {
    if (!(u > 0.0 && u < 1.0)) throw std::invalid_argument("match_to_gt: u must be in (0,1)");
    std::vector<MatchResult> out;
    out.reserve(proposals.size());
    for (size_t i = 0; i < proposals.size(); ++i) {
        MatchResult m;
        m.proposal_index = static_cast<int>(i);
        if (!gts.empty()) {
            int best = 0;
            double best_iou = -1.0;
            for (size_t g = 0; g < gts.size(); ++g) {
                const double v = iou(proposals[i], gts[g].first);
                if (v > best_iou) {
                    best_iou = v;
                    best = static_cast<int>(g);
                }
            }
            m.max_iou = best_iou;
            m.gt_index = best;
            m.is_foreground = best_iou >= u;
        }
        out.push_back(m);
    }
    return out;
}

}  // namespace ilnet
