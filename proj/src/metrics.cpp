#include "ilnet/metrics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace ilnet {

std::vector<double> coco_iou_thresholds() {
    std::vector<double> t;
    for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
    return t;
}

namespace {

// AP for one class at one threshold: greedy matching in score order, then
// 101-point interpolation of the precision envelope.
double ap_single(const std::vector<std::vector<ScoredBox>>& dets,
                 const std::vector<std::vector<std::pair<BBox, int>>>& gts, int cls,
                 double thr, int npos) {
    struct Det {
        int img;
        int idx;
        double score;
    };
    std::vector<Det> all;
    for (size_t i = 0; i < dets.size(); ++i)
        for (size_t d = 0; d < dets[i].size(); ++d)
            if (dets[i][d].class_id == cls)
                all.push_back({static_cast<int>(i), static_cast<int>(d), dets[i][d].score});
    std::sort(all.begin(), all.end(), [](const Det& a, const Det& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.img != b.img) return a.img < b.img;
        return a.idx < b.idx;
    });

    std::vector<std::vector<bool>> used(gts.size());
    for (size_t i = 0; i < gts.size(); ++i) used[i].assign(gts[i].size(), false);

    std::vector<int> tp;
    tp.reserve(all.size());
    for (const Det& d : all) {
        const auto& box = dets[static_cast<size_t>(d.img)][static_cast<size_t>(d.idx)].box;
        int best = -1;
        double best_iou = 0.0;
        const auto& img_gts = gts[static_cast<size_t>(d.img)];
        for (size_t g = 0; g < img_gts.size(); ++g) {
            if (img_gts[g].second != cls) continue;
            if (used[static_cast<size_t>(d.img)][g]) continue;
            const double v = iou(box, img_gts[g].first);
            if (v >= thr && v > best_iou) {
                best_iou = v;
                best = static_cast<int>(g);
            }
        }
        if (best >= 0) {
            used[static_cast<size_t>(d.img)][static_cast<size_t>(best)] = true;
            tp.push_back(1);
        } else {
            tp.push_back(0);
        }
    }

    std::vector<double> recall, precision;
    int tps = 0;
    for (size_t i = 0; i < tp.size(); ++i) {
        tps += tp[i];
        recall.push_back(static_cast<double>(tps) / npos);
        precision.push_back(static_cast<double>(tps) / static_cast<double>(i + 1));
    }

    double ap = 0.0;
    for (int ri = 0; ri <= 100; ++ri) {
        const double r = ri / 100.0;
        double best_p = 0.0;
        for (size_t i = 0; i < recall.size(); ++i)
            if (recall[i] >= r) best_p = std::max(best_p, precision[i]);
        ap += best_p;
    }
    return ap / 101.0;
}

}  // namespace

APReport evaluate_ap(const std::vector<std::vector<ScoredBox>>& dets,
                     const std::vector<std::vector<std::pair<BBox, int>>>& gts,
                     const std::vector<double>& iou_thresholds, int num_classes) {
    if (dets.size() != gts.size())
        throw std::invalid_argument("evaluate_ap: dets/gts image count mismatch");
    if (iou_thresholds.empty()) throw std::invalid_argument("evaluate_ap: no thresholds");

    APReport rep;
    rep.per_class.assign(static_cast<size_t>(num_classes), -1.0);
    double sum_all = 0.0, sum_50 = 0.0, sum_75 = 0.0;
    int n_classes_with_gt = 0;
    bool have_50 = false, have_75 = false;

    for (int c = 0; c < num_classes; ++c) {
        int npos = 0;
        for (const auto& img : gts)
            for (const auto& g : img)
                if (g.second == c) ++npos;
        if (npos == 0) continue;
        ++n_classes_with_gt;

        double acc = 0.0;
        for (double thr : iou_thresholds) {
            const double ap = ap_single(dets, gts, c, thr, npos);
            acc += ap;
            if (std::abs(thr - 0.50) < 1e-9) {
                sum_50 += ap;
                have_50 = true;
            }
            if (std::abs(thr - 0.75) < 1e-9) {
                sum_75 += ap;
                have_75 = true;
            }
        }
        rep.per_class[static_cast<size_t>(c)] = acc / iou_thresholds.size();
        sum_all += acc / iou_thresholds.size();
    }

    if (n_classes_with_gt > 0) {
        rep.map = sum_all / n_classes_with_gt;
        rep.ap50 = have_50 ? sum_50 / n_classes_with_gt : 0.0;
        rep.ap75 = have_75 ? sum_75 / n_classes_with_gt : 0.0;
    }
    return rep;
}

QualityHistogram pseudo_quality_histogram(const std::vector<std::vector<ScoredBox>>& pseudo,
                                          const std::vector<std::vector<std::pair<BBox, int>>>& gts,
                                          int bins) {
    if (pseudo.size() != gts.size())
        throw std::invalid_argument("pseudo_quality_histogram: image count mismatch");
    if (bins <= 0) throw std::invalid_argument("pseudo_quality_histogram: bins must be positive");

    QualityHistogram h;
    h.edges.resize(static_cast<size_t>(bins) + 1);
    for (int i = 0; i <= bins; ++i) h.edges[static_cast<size_t>(i)] = static_cast<double>(i) / bins;
    h.counts.assign(static_cast<size_t>(bins), 0);
    h.wrong.assign(static_cast<size_t>(bins), 0);

    for (size_t i = 0; i < pseudo.size(); ++i) {
        for (const auto& p : pseudo[i]) {
            double max_iou = 0.0;
            int arg_class = -1;
            for (const auto& g : gts[i]) {
                const double v = iou(p.box, g.first);
                if (v > max_iou) {
                    max_iou = v;
                    arg_class = g.second;
                }
            }
            int bin = static_cast<int>(max_iou * bins);
            if (bin >= bins) bin = bins - 1;
            h.counts[static_cast<size_t>(bin)] += 1;
            if (arg_class != p.class_id) h.wrong[static_cast<size_t>(bin)] += 1;
        }
    }
    return h;
}

std::vector<ShareRecord> loss_share_series(const std::vector<ShareRecord>& weighted_terms) {
    std::vector<ShareRecord> out;
    for (const auto& r : weighted_terms) {
        const double total = r.cls + r.reg + r.iou;
        if (total <= 0.0) continue;
        ShareRecord s;
        s.iteration = r.iteration;
        s.cls = r.cls / total;
        s.reg = r.reg / total;
        s.iou = r.iou / total;
        out.push_back(s);
    }
    return out;
}

std::pair<double, double> error_concentration(const QualityHistogram& hist, double split_iou) {
    const int64_t total = hist.total();
    if (total == 0) throw std::invalid_argument("error_concentration: empty histogram");
    int64_t total_wrong = 0;
    for (int64_t w : hist.wrong) total_wrong += w;

    int64_t below = 0, below_wrong = 0;
    for (size_t b = 0; b < hist.counts.size(); ++b) {
        if (hist.edges[b + 1] <= split_iou + 1e-12) {
            below += hist.counts[b];
            below_wrong += hist.wrong[b];
        }
    }
    const double frac_all = static_cast<double>(below) / static_cast<double>(total);
    const double frac_wrong =
        total_wrong > 0 ? static_cast<double>(below_wrong) / static_cast<double>(total_wrong) : 0.0;
    return {frac_all, frac_wrong};
}

std::string ap_report_jsonl(const APReport& r) {
    nlohmann::ordered_json j;
    j["map"] = r.map;
    j["ap50"] = r.ap50;
    j["ap75"] = r.ap75;
    j["per_class"] = r.per_class;
    return j.dump();
}

std::string ap_report_table(const APReport& r) {
    char buf[256];
    std::string out;
    out += "metric      value\n";
    std::snprintf(buf, sizeof(buf), "mAP         %.4f\n", r.map);
    out += buf;
    std::snprintf(buf, sizeof(buf), "AP50        %.4f\n", r.ap50);
    out += buf;
    std::snprintf(buf, sizeof(buf), "AP75        %.4f\n", r.ap75);
    out += buf;
    for (size_t c = 0; c < r.per_class.size(); ++c) {
        if (r.per_class[c] < 0) {
            std::snprintf(buf, sizeof(buf), "AP class %zu  n/a\n", c);
        } else {
            std::snprintf(buf, sizeof(buf), "AP class %zu  %.4f\n", c, r.per_class[c]);
        }
        out += buf;
    }
    return out;
}

std::string histogram_csv(const QualityHistogram& h) {
    std::string out = "bin_low,bin_high,count,wrong_class_count\n";
    char buf[128];
    for (size_t b = 0; b < h.counts.size(); ++b) {
        std::snprintf(buf, sizeof(buf), "%.4f,%.4f,%lld,%lld\n", h.edges[b], h.edges[b + 1],
                      static_cast<long long>(h.counts[b]), static_cast<long long>(h.wrong[b]));
        out += buf;
    }
    return out;
}

}  // namespace ilnet
