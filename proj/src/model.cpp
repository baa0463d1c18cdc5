#include "ilnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ilnet/kernels.hpp"
#include "ilnet/rng.hpp"

namespace ilnet {

namespace kk = kernels;

namespace {

constexpr double kDeltaClamp = 4.0;  // log-space cap before decoding, standard guard

DeltaVec clamp_delta(const DeltaVec& d) {
    DeltaVec o;
    o.tx = std::clamp(d.tx, -kDeltaClamp, kDeltaClamp);
    o.ty = std::clamp(d.ty, -kDeltaClamp, kDeltaClamp);
    o.tw = std::clamp(d.tw, -kDeltaClamp, kDeltaClamp);
    o.th = std::clamp(d.th, -kDeltaClamp, kDeltaClamp);
    return o;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void softmax_rows(const Tensor& logits, Tensor& out) {
    const int R = logits.shape[0], C = logits.shape[1];
    out = Tensor::zeros({R, C});
    for (int r = 0; r < R; ++r) {
        const double* in = logits.data() + static_cast<size_t>(r) * C;
        double* o = out.data() + static_cast<size_t>(r) * C;
        double mx = in[0];
        for (int c = 1; c < C; ++c) mx = std::max(mx, in[c]);
        double sum = 0.0;
        for (int c = 0; c < C; ++c) {
            o[c] = std::exp(in[c] - mx);
            sum += o[c];
        }
        for (int c = 0; c < C; ++c) o[c] /= sum;
    }
}

struct LinSample {
    int i0 = 0, i1 = 0;
    double w = 0.0;  // value = (1-w)*f[i0] + w*f[i1]
};

LinSample axis_sample(double f, int n) {
    LinSample s;
    if (f <= 0.0 || n == 1) return s;
    if (f >= n - 1) {
        s.i0 = s.i1 = n - 1;
        return s;
    }
    s.i0 = static_cast<int>(std::floor(f));
    s.i1 = s.i0 + 1;
    s.w = f - s.i0;
    return s;
}

// pooled sample grid of one roi in feature coordinates
void roi_samples(const BBox& box, int P, double stride, int G, std::vector<LinSample>& sy,
                 std::vector<LinSample>& sx) {
    sy.resize(P);
    sx.resize(P);
    const double bw = box.width(), bh = box.height();
    for (int p = 0; p < P; ++p) {
        const double fy = (box.y1 + (p + 0.5) * bh / P) / stride - 0.5;
        const double fx = (box.x1 + (p + 0.5) * bw / P) / stride - 0.5;
        sy[p] = axis_sample(fy, G);
        sx[p] = axis_sample(fx, G);
    }
}

}  // namespace

// ---- state ----------------------------------------------------------------

std::vector<ParamDef> param_defs(const ArchConfig& a) {
    const int A = a.num_anchor_scales();
    const int K = a.num_classes;
    const int P = a.roi_pool;
    const int F = a.shared_dim;
    const int D = a.branch_input_dim();
    const int H = a.branch_hidden_dim();
    return {
        {"conv1_w", {a.c1, 3, 3, 3}},       {"conv1_b", {a.c1}},
        {"conv2_w", {a.c2, a.c1, 3, 3}},    {"conv2_b", {a.c2}},
        {"conv3_w", {a.c3, a.c2, 3, 3}},    {"conv3_b", {a.c3}},
        {"rpn_conv_w", {a.rpn_channels, a.c3, 3, 3}}, {"rpn_conv_b", {a.rpn_channels}},
        {"rpn_obj_w", {A, a.rpn_channels}},           {"rpn_obj_b", {A}},
        {"rpn_delta_w", {4 * A, a.rpn_channels}},     {"rpn_delta_b", {4 * A}},
        {"fc1_w", {F, a.c3 * P * P}},       {"fc1_b", {F}},
        {"fc2_w", {F, F}},                  {"fc2_b", {F}},
        {"cls_w", {K + 1, F}},              {"cls_b", {K + 1}},
        {"reg_w", {4 * K, F}},              {"reg_b", {4 * K}},
        {"br1_w", {H, D}},                  {"br1_b", {H}},
        {"br2_w", {K + 1, H}},              {"br2_b", {K + 1}},
    };
}

ModelState ModelState::init(const ArchConfig& a, uint64_t seed) {
    if (!a.valid()) throw std::invalid_argument("ModelState::init: invalid ArchConfig");
    ModelState s;
    s.arch = a;
    Rng r(seed);
    for (const auto& def : param_defs(a)) {
        Tensor t(def.shape);
        if (def.shape.size() > 1) {
            size_t fan_in = 1;
            for (size_t i = 1; i < def.shape.size(); ++i) fan_in *= def.shape[i];
            const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
            for (double& v : t.v) v = r.uniform(-bound, bound);
        }
        s.p.push_back(std::move(t));
    }
    return s;
}

size_t ModelState::param_count() const {
    size_t n = 0;
    for (const auto& t : p) n += t.size();
    return n;
}

bool ModelState::same_shape(const ModelState& o) const {
    if (p.size() != o.p.size()) return false;
    for (size_t i = 0; i < p.size(); ++i)
        if (!p[i].same_shape(o.p[i])) return false;
    return true;
}

ParamGrads ParamGrads::zeros_like(const ModelState& s) {
    ParamGrads g;
    for (const auto& t : s.p) g.g.emplace_back(Tensor::zeros(t.shape));
    return g;
}

void ParamGrads::accumulate(const ParamGrads& o, double k) {
    for (size_t i = 0; i < g.size(); ++i)
        for (size_t j = 0; j < g[i].size(); ++j) g[i].v[j] += k * o.g[i].v[j];
}

void ParamGrads::scale(double k) {
    for (auto& t : g)
        for (double& v : t.v) v *= k;
}

// ---- forward --------------------------------------------------------------

std::vector<BBox> make_anchors(const ArchConfig& a) {
    const int G = a.grid();
    std::vector<BBox> out;
    out.reserve(static_cast<size_t>(G) * G * a.num_anchor_scales());
    for (int gy = 0; gy < G; ++gy)
        for (int gx = 0; gx < G; ++gx)
            for (double s : a.anchor_scales) {
                const double cx = (gx + 0.5) * a.anchor_stride;
                const double cy = (gy + 0.5) * a.anchor_stride;
                out.push_back(BBox{cx - s / 2.0, cy - s / 2.0, cx + s / 2.0, cy + s / 2.0});
            }
    return out;
}

void trunk_rpn_forward(const ModelState& s, const Tensor& image, TrunkCache& tc, RpnCache& rc) {
    const ArchConfig& a = s.arch;
    const int S = a.image_size, S2 = S / 2, S4 = S / 4, G = a.grid();
    const int A = a.num_anchor_scales();

    tc.a1 = Tensor::zeros({a.c1, S, S});
    kk::conv3x3_forward(image.data(), 3, S, S, s.p[kConv1W].data(), s.p[kConv1B].data(), a.c1,
                        tc.a1.data());
    tc.e1 = Tensor::zeros({a.c1, S, S});
    kk::elu_forward(tc.a1.data(), tc.a1.size(), tc.e1.data());
    tc.p1 = Tensor::zeros({a.c1, S2, S2});
    kk::avgpool2_forward(tc.e1.data(), a.c1, S, S, tc.p1.data());

    tc.a2 = Tensor::zeros({a.c2, S2, S2});
    kk::conv3x3_forward(tc.p1.data(), a.c1, S2, S2, s.p[kConv2W].data(), s.p[kConv2B].data(),
                        a.c2, tc.a2.data());
    tc.e2 = Tensor::zeros({a.c2, S2, S2});
    kk::elu_forward(tc.a2.data(), tc.a2.size(), tc.e2.data());
    tc.p2 = Tensor::zeros({a.c2, S4, S4});
    kk::avgpool2_forward(tc.e2.data(), a.c2, S2, S2, tc.p2.data());

    tc.a3 = Tensor::zeros({a.c3, S4, S4});
    kk::conv3x3_forward(tc.p2.data(), a.c2, S4, S4, s.p[kConv3W].data(), s.p[kConv3B].data(),
                        a.c3, tc.a3.data());
    tc.e3 = Tensor::zeros({a.c3, S4, S4});
    kk::elu_forward(tc.a3.data(), tc.a3.size(), tc.e3.data());
    tc.feat = Tensor::zeros({a.c3, G, G});
    kk::avgpool2_forward(tc.e3.data(), a.c3, S4, S4, tc.feat.data());

    rc.ra = Tensor::zeros({a.rpn_channels, G, G});
    kk::conv3x3_forward(tc.feat.data(), a.c3, G, G, s.p[kRpnConvW].data(),
                        s.p[kRpnConvB].data(), a.rpn_channels, rc.ra.data());
    rc.re = Tensor::zeros({a.rpn_channels, G, G});
    kk::elu_forward(rc.ra.data(), rc.ra.size(), rc.re.data());
    rc.obj = Tensor::zeros({A, G, G});
    kk::conv1x1_forward(rc.re.data(), a.rpn_channels, G, G, s.p[kRpnObjW].data(),
                        s.p[kRpnObjB].data(), A, rc.obj.data());
    rc.dlt = Tensor::zeros({4 * A, G, G});
    kk::conv1x1_forward(rc.re.data(), a.rpn_channels, G, G, s.p[kRpnDeltaW].data(),
                        s.p[kRpnDeltaB].data(), 4 * A, rc.dlt.data());
}

std::vector<Proposal> extract_proposals(const ArchConfig& a, const RpnCache& rc) {
    const int G = a.grid();
    const int A = a.num_anchor_scales();
    const double S = a.image_size;
    const std::vector<BBox> anchors = make_anchors(a);

    struct Cand {
        BBox box;
        double score;
        DeltaVec delta;
    };
    std::vector<Cand> cands;
    cands.reserve(anchors.size());
    for (int gy = 0; gy < G; ++gy)
        for (int gx = 0; gx < G; ++gx)
            for (int sc = 0; sc < A; ++sc) {
                const size_t cell = static_cast<size_t>(gy) * G + gx;
                DeltaVec d;
                d.tx = rc.dlt.v[(4 * sc + 0) * static_cast<size_t>(G) * G + cell];
                d.ty = rc.dlt.v[(4 * sc + 1) * static_cast<size_t>(G) * G + cell];
                d.tw = rc.dlt.v[(4 * sc + 2) * static_cast<size_t>(G) * G + cell];
                d.th = rc.dlt.v[(4 * sc + 3) * static_cast<size_t>(G) * G + cell];
                const BBox& anchor = anchors[(cell)*A + sc];
                Cand c;
                c.box = decode_deltas_clamped(anchor, clamp_delta(d), S, S);
                c.score = sigmoid(rc.obj.v[sc * static_cast<size_t>(G) * G + cell]);
                c.delta = d;
                cands.push_back(c);
            }

    std::vector<int> order(cands.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int x, int y) {
        if (cands[x].score != cands[y].score) return cands[x].score > cands[y].score;
        return x < y;
    });

    std::vector<Proposal> kept;
    for (int idx : order) {
        if (static_cast<int>(kept.size()) >= a.proposal_count) break;
        const Cand& c = cands[static_cast<size_t>(idx)];
        bool suppressed = false;
        for (const auto& k : kept)
            if (iou(k.box, c.box) > a.proposal_nms) {
                suppressed = true;
                break;
            }
        if (!suppressed) kept.push_back(Proposal{c.box, c.score, c.delta});
    }
    return kept;
}

std::vector<Proposal> forward_proposals(const ModelState& s, const Tensor& image) {
    TrunkCache tc;
    RpnCache rc;
    trunk_rpn_forward(s, image, tc, rc);
    return extract_proposals(s.arch, rc);
}

void roi_forward(const ModelState& s, const TrunkCache& tc, const std::vector<BBox>& rois,
                 const std::vector<int>* frozen_sel, RoiCache& rc) {
    const ArchConfig& a = s.arch;
    const int R = static_cast<int>(rois.size());
    const int P = a.roi_pool;
    const int K = a.num_classes;
    const int F = a.shared_dim;
    const int G = a.grid();
    const int crop_dim = a.c3 * P * P;

    rc.rois = rois;
    rc.crop = Tensor::zeros({R, crop_dim});
    if (R == 0) return;

    std::vector<LinSample> sy, sx;
    for (int r = 0; r < R; ++r) {
        roi_samples(rois[static_cast<size_t>(r)], P, a.anchor_stride, G, sy, sx);
        double* row = rc.crop.data() + static_cast<size_t>(r) * crop_dim;
        for (int c = 0; c < a.c3; ++c) {
            const double* plane = tc.feat.data() + static_cast<size_t>(c) * G * G;
            for (int py = 0; py < P; ++py) {
                const LinSample& y = sy[py];
                for (int px = 0; px < P; ++px) {
                    const LinSample& x = sx[px];
                    const double v00 = plane[static_cast<size_t>(y.i0) * G + x.i0];
                    const double v01 = plane[static_cast<size_t>(y.i0) * G + x.i1];
                    const double v10 = plane[static_cast<size_t>(y.i1) * G + x.i0];
                    const double v11 = plane[static_cast<size_t>(y.i1) * G + x.i1];
                    row[(static_cast<size_t>(c) * P + py) * P + px] =
                        (1 - y.w) * ((1 - x.w) * v00 + x.w * v01) +
                        y.w * ((1 - x.w) * v10 + x.w * v11);
                }
            }
        }
    }

    rc.f1a = Tensor::zeros({R, F});
    kk::fc_forward(rc.crop.data(), R, crop_dim, s.p[kFc1W].data(), s.p[kFc1B].data(), F,
                   rc.f1a.data());
    rc.f1 = Tensor::zeros({R, F});
    kk::elu_forward(rc.f1a.data(), rc.f1a.size(), rc.f1.data());
    rc.f2a = Tensor::zeros({R, F});
    kk::fc_forward(rc.f1.data(), R, F, s.p[kFc2W].data(), s.p[kFc2B].data(), F, rc.f2a.data());
    rc.f2 = Tensor::zeros({R, F});
    kk::elu_forward(rc.f2a.data(), rc.f2a.size(), rc.f2.data());

    rc.cls_logit = Tensor::zeros({R, K + 1});
    kk::fc_forward(rc.f2.data(), R, F, s.p[kClsW].data(), s.p[kClsB].data(), K + 1,
                   rc.cls_logit.data());
    softmax_rows(rc.cls_logit, rc.cls_s);

    rc.reg = Tensor::zeros({R, 4 * K});
    kk::fc_forward(rc.f2.data(), R, F, s.p[kRegW].data(), s.p[kRegB].data(), 4 * K,
                   rc.reg.data());

    rc.sel_class.resize(R);
    for (int r = 0; r < R; ++r) {
        if (frozen_sel) {
            rc.sel_class[static_cast<size_t>(r)] = (*frozen_sel)[static_cast<size_t>(r)];
        } else {
            const double* sr = rc.cls_s.data() + static_cast<size_t>(r) * (K + 1);
            int best = 0;
            for (int k = 1; k < K; ++k)
                if (sr[k] > sr[best]) best = k;
            rc.sel_class[static_cast<size_t>(r)] = best;
        }
    }

    if (!a.branch_enabled) return;

    const int D = a.branch_input_dim();
    const int Hd = a.branch_hidden_dim();
    rc.bin = Tensor::zeros({R, D});
    for (int r = 0; r < R; ++r) {
        double* row = rc.bin.data() + static_cast<size_t>(r) * D;
        int off = 0;
        if (a.branch_mask.use_shared) {
            const double* f = rc.f2.data() + static_cast<size_t>(r) * F;
            std::copy(f, f + F, row + off);
            off += F;
        }
        if (a.branch_mask.use_scores) {
            const double* sr = rc.cls_s.data() + static_cast<size_t>(r) * (K + 1);
            std::copy(sr, sr + K + 1, row + off);
            off += K + 1;
        }
        if (a.branch_mask.use_deltas) {
            const double* dr =
                rc.reg.data() + static_cast<size_t>(r) * 4 * K + 4 * rc.sel_class[r];
            std::copy(dr, dr + 4, row + off);
            off += 4;
        }
    }
    rc.b1a = Tensor::zeros({R, Hd});
    kk::fc_forward(rc.bin.data(), R, D, s.p[kBr1W].data(), s.p[kBr1B].data(), Hd, rc.b1a.data());
    rc.b1 = Tensor::zeros({R, Hd});
    kk::elu_forward(rc.b1a.data(), rc.b1a.size(), rc.b1.data());
    rc.b2a = Tensor::zeros({R, K + 1});
    kk::fc_forward(rc.b1.data(), R, Hd, s.p[kBr2W].data(), s.p[kBr2B].data(), K + 1,
                   rc.b2a.data());
    rc.q = Tensor::zeros({R, K + 1});
    kk::sigmoid_forward(rc.b2a.data(), rc.b2a.size(), rc.q.data());
}

std::vector<double> iou_branch_forward(const std::vector<double>& x_sh,
                                       const std::vector<double>& scores,
                                       const std::vector<double>& deltas,
                                       const BranchInputMask& mask, const Tensor& w1,
                                       const Tensor& b1, const Tensor& w2, const Tensor& b2) {
    if (!mask.valid()) throw std::invalid_argument("iou_branch_forward: empty mask");
    std::vector<double> in;
    if (mask.use_shared) in.insert(in.end(), x_sh.begin(), x_sh.end());
    if (mask.use_scores) in.insert(in.end(), scores.begin(), scores.end());
    if (mask.use_deltas) in.insert(in.end(), deltas.begin(), deltas.end());
    const int D = w1.shape[1], Hd = w1.shape[0], Out = w2.shape[0];
    if (static_cast<int>(in.size()) != D)
        throw std::invalid_argument("iou_branch_forward: input dim mismatch");
    if (w2.shape[1] != Hd) throw std::invalid_argument("iou_branch_forward: hidden dim mismatch");

    std::vector<double> h(static_cast<size_t>(Hd)), out(static_cast<size_t>(Out));
    kk::serial::fc_forward(in.data(), 1, D, w1.data(), b1.data(), Hd, h.data());
    kk::serial::elu_forward(h.data(), h.size(), h.data());
    kk::serial::fc_forward(h.data(), 1, Hd, w2.data(), b2.data(), Out, out.data());
    kk::serial::sigmoid_forward(out.data(), out.size(), out.data());
    return out;
}

ForwardCache full_forward(const ModelState& s, const Tensor& image,
                          const std::vector<BBox>& rois, const std::vector<int>* frozen_sel) {
    ForwardCache c;
    c.x = image;
    trunk_rpn_forward(s, image, c.trunk, c.rpn);
    roi_forward(s, c.trunk, rois, frozen_sel, c.roi);
    return c;
}

// ---- backward -------------------------------------------------------------

void backward(const ModelState& s, const ForwardCache& c, const HeadGrads& hg, ParamGrads& out) {
    const ArchConfig& a = s.arch;
    const int S = a.image_size, S2 = S / 2, S4 = S / 4, G = a.grid();
    const int A = a.num_anchor_scales();
    const int K = a.num_classes;
    const int F = a.shared_dim;
    const int P = a.roi_pool;
    const int R = static_cast<int>(c.roi.rois.size());
    const int crop_dim = a.c3 * P * P;

    Tensor g_feat = Tensor::zeros({a.c3, G, G});

    // ---- RoI head and branch ----
    if (R > 0) {
        Tensor g_cls = hg.g_cls_logit.size() ? hg.g_cls_logit : Tensor::zeros({R, K + 1});
        Tensor g_reg = hg.g_reg.size() ? hg.g_reg : Tensor::zeros({R, 4 * K});
        Tensor g_f2 = Tensor::zeros({R, F});

        if (a.branch_enabled && hg.g_qlogit.size()) {
            const int D = a.branch_input_dim();
            const int Hd = a.branch_hidden_dim();
            kk::fc_backward_params(hg.g_qlogit.data(), R, K + 1, c.roi.b1.data(), Hd,
                                   out.g[kBr2W].data(), out.g[kBr2B].data());
            Tensor g_b1 = Tensor::zeros({R, Hd});
            kk::fc_backward_input(hg.g_qlogit.data(), R, K + 1, s.p[kBr2W].data(), Hd,
                                  g_b1.data());
            Tensor g_b1a = Tensor::zeros({R, Hd});
            kk::elu_backward(c.roi.b1a.data(), g_b1.data(), g_b1.size(), g_b1a.data());
            kk::fc_backward_params(g_b1a.data(), R, Hd, c.roi.bin.data(), D,
                                   out.g[kBr1W].data(), out.g[kBr1B].data());
            Tensor g_bin = Tensor::zeros({R, D});
            kk::fc_backward_input(g_b1a.data(), R, Hd, s.p[kBr1W].data(), D, g_bin.data());

            for (int r = 0; r < R; ++r) {
                const double* row = g_bin.data() + static_cast<size_t>(r) * D;
                int off = 0;
                if (a.branch_mask.use_shared) {
                    double* f = g_f2.data() + static_cast<size_t>(r) * F;
                    for (int i = 0; i < F; ++i) f[i] += row[off + i];
                    off += F;
                }
                if (a.branch_mask.use_scores) {
                    // g wrt softmax outputs -> VJP onto the logits
                    const double* sr = c.roi.cls_s.data() + static_cast<size_t>(r) * (K + 1);
                    double* gl = g_cls.data() + static_cast<size_t>(r) * (K + 1);
                    double dot = 0.0;
                    for (int j = 0; j <= K; ++j) dot += sr[j] * row[off + j];
                    for (int j = 0; j <= K; ++j) gl[j] += sr[j] * (row[off + j] - dot);
                    off += K + 1;
                }
                if (a.branch_mask.use_deltas) {
                    double* gr = g_reg.data() + static_cast<size_t>(r) * 4 * K +
                                 4 * c.roi.sel_class[static_cast<size_t>(r)];
                    for (int i = 0; i < 4; ++i) gr[i] += row[off + i];
                    off += 4;
                }
            }
        }

        kk::fc_backward_params(g_cls.data(), R, K + 1, c.roi.f2.data(), F, out.g[kClsW].data(),
                               out.g[kClsB].data());
        Tensor tmp = Tensor::zeros({R, F});
        kk::fc_backward_input(g_cls.data(), R, K + 1, s.p[kClsW].data(), F, tmp.data());
        for (size_t i = 0; i < g_f2.size(); ++i) g_f2.v[i] += tmp.v[i];

        kk::fc_backward_params(g_reg.data(), R, 4 * K, c.roi.f2.data(), F, out.g[kRegW].data(),
                               out.g[kRegB].data());
        kk::fc_backward_input(g_reg.data(), R, 4 * K, s.p[kRegW].data(), F, tmp.data());
        for (size_t i = 0; i < g_f2.size(); ++i) g_f2.v[i] += tmp.v[i];

        Tensor g_f2a = Tensor::zeros({R, F});
        kk::elu_backward(c.roi.f2a.data(), g_f2.data(), g_f2.size(), g_f2a.data());
        kk::fc_backward_params(g_f2a.data(), R, F, c.roi.f1.data(), F, out.g[kFc2W].data(),
                               out.g[kFc2B].data());
        Tensor g_f1 = Tensor::zeros({R, F});
        kk::fc_backward_input(g_f2a.data(), R, F, s.p[kFc2W].data(), F, g_f1.data());
        Tensor g_f1a = Tensor::zeros({R, F});
        kk::elu_backward(c.roi.f1a.data(), g_f1.data(), g_f1.size(), g_f1a.data());
        kk::fc_backward_params(g_f1a.data(), R, F, c.roi.crop.data(), crop_dim,
                               out.g[kFc1W].data(), out.g[kFc1B].data());
        Tensor g_crop = Tensor::zeros({R, crop_dim});
        kk::fc_backward_input(g_f1a.data(), R, F, s.p[kFc1W].data(), crop_dim, g_crop.data());

        std::vector<LinSample> sy, sx;
        for (int r = 0; r < R; ++r) {
            roi_samples(c.roi.rois[static_cast<size_t>(r)], P, a.anchor_stride, G, sy, sx);
            const double* row = g_crop.data() + static_cast<size_t>(r) * crop_dim;
            for (int ch = 0; ch < a.c3; ++ch) {
                double* plane = g_feat.data() + static_cast<size_t>(ch) * G * G;
                for (int py = 0; py < P; ++py) {
                    const LinSample& y = sy[py];
                    for (int px = 0; px < P; ++px) {
                        const LinSample& x = sx[px];
                        const double g = row[(static_cast<size_t>(ch) * P + py) * P + px];
                        plane[static_cast<size_t>(y.i0) * G + x.i0] += (1 - y.w) * (1 - x.w) * g;
                        plane[static_cast<size_t>(y.i0) * G + x.i1] += (1 - y.w) * x.w * g;
                        plane[static_cast<size_t>(y.i1) * G + x.i0] += y.w * (1 - x.w) * g;
                        plane[static_cast<size_t>(y.i1) * G + x.i1] += y.w * x.w * g;
                    }
                }
            }
        }
    }

    // ---- RPN ----
    Tensor g_re = Tensor::zeros({a.rpn_channels, G, G});
    bool any_rpn = false;
    if (hg.g_obj.size()) {
        any_rpn = true;
        kk::conv1x1_backward_params(hg.g_obj.data(), A, c.rpn.re.data(), a.rpn_channels, G, G,
                                    out.g[kRpnObjW].data(), out.g[kRpnObjB].data());
        Tensor tmp = Tensor::zeros({a.rpn_channels, G, G});
        kk::conv1x1_backward_input(hg.g_obj.data(), A, G, G, s.p[kRpnObjW].data(),
                                   a.rpn_channels, tmp.data());
        for (size_t i = 0; i < g_re.size(); ++i) g_re.v[i] += tmp.v[i];
    }
    if (hg.g_dlt.size()) {
        any_rpn = true;
        kk::conv1x1_backward_params(hg.g_dlt.data(), 4 * A, c.rpn.re.data(), a.rpn_channels, G,
                                    G, out.g[kRpnDeltaW].data(), out.g[kRpnDeltaB].data());
        Tensor tmp = Tensor::zeros({a.rpn_channels, G, G});
        kk::conv1x1_backward_input(hg.g_dlt.data(), 4 * A, G, G, s.p[kRpnDeltaW].data(),
                                   a.rpn_channels, tmp.data());
        for (size_t i = 0; i < g_re.size(); ++i) g_re.v[i] += tmp.v[i];
    }
    if (any_rpn) {
        Tensor g_ra = Tensor::zeros({a.rpn_channels, G, G});
        kk::elu_backward(c.rpn.ra.data(), g_re.data(), g_re.size(), g_ra.data());
        kk::conv3x3_backward_params(g_ra.data(), a.rpn_channels, c.trunk.feat.data(), a.c3, G,
                                    G, out.g[kRpnConvW].data(), out.g[kRpnConvB].data());
        Tensor tmp = Tensor::zeros({a.c3, G, G});
        kk::conv3x3_backward_input(g_ra.data(), a.rpn_channels, G, G, s.p[kRpnConvW].data(),
                                   a.c3, tmp.data());
        for (size_t i = 0; i < g_feat.size(); ++i) g_feat.v[i] += tmp.v[i];
    }

    // ---- trunk ----
    Tensor g_e3 = Tensor::zeros({a.c3, S4, S4});
    kk::avgpool2_backward(g_feat.data(), a.c3, S4, S4, g_e3.data());
    Tensor g_a3 = Tensor::zeros({a.c3, S4, S4});
    kk::elu_backward(c.trunk.a3.data(), g_e3.data(), g_e3.size(), g_a3.data());
    kk::conv3x3_backward_params(g_a3.data(), a.c3, c.trunk.p2.data(), a.c2, S4, S4,
                                out.g[kConv3W].data(), out.g[kConv3B].data());
    Tensor g_p2 = Tensor::zeros({a.c2, S4, S4});
    kk::conv3x3_backward_input(g_a3.data(), a.c3, S4, S4, s.p[kConv3W].data(), a.c2,
                               g_p2.data());

    Tensor g_e2 = Tensor::zeros({a.c2, S2, S2});
    kk::avgpool2_backward(g_p2.data(), a.c2, S2, S2, g_e2.data());
    Tensor g_a2 = Tensor::zeros({a.c2, S2, S2});
    kk::elu_backward(c.trunk.a2.data(), g_e2.data(), g_e2.size(), g_a2.data());
    kk::conv3x3_backward_params(g_a2.data(), a.c2, c.trunk.p1.data(), a.c1, S2, S2,
                                out.g[kConv2W].data(), out.g[kConv2B].data());
    Tensor g_p1 = Tensor::zeros({a.c1, S2, S2});
    kk::conv3x3_backward_input(g_a2.data(), a.c2, S2, S2, s.p[kConv2W].data(), a.c1,
                               g_p1.data());

    Tensor g_e1 = Tensor::zeros({a.c1, S, S});
    kk::avgpool2_backward(g_p1.data(), a.c1, S, S, g_e1.data());
    Tensor g_a1 = Tensor::zeros({a.c1, S, S});
    kk::elu_backward(c.trunk.a1.data(), g_e1.data(), g_e1.size(), g_a1.data());
    kk::conv3x3_backward_params(g_a1.data(), a.c1, c.x.data(), 3, S, S, out.g[kConv1W].data(),
                                out.g[kConv1B].data());
}

// ---- inference ------------------------------------------------------------

std::vector<Detection> forward_roi(const ModelState& s, const Tensor& image,
                                   const std::vector<BBox>& proposals) {
    TrunkCache tc;
    RpnCache rpc;
    trunk_rpn_forward(s, image, tc, rpc);
    RoiCache rc;
    roi_forward(s, tc, proposals, nullptr, rc);

    const int K = s.arch.num_classes;
    const int F = s.arch.shared_dim;
    std::vector<Detection> out;
    out.reserve(proposals.size());
    for (size_t r = 0; r < proposals.size(); ++r) {
        Detection d;
        d.box = proposals[r];
        const double* sr = rc.cls_s.data() + r * (K + 1);
        d.scores.assign(sr, sr + K + 1);
        d.predicted_class = rc.sel_class[r];
        const double* dr = rc.reg.data() + r * 4 * K + 4 * d.predicted_class;
        d.deltas = DeltaVec{dr[0], dr[1], dr[2], dr[3]};
        const double* fr = rc.f2.data() + r * F;
        d.x_shared.assign(fr, fr + F);
        if (s.arch.branch_enabled) {
            const double* qr = rc.q.data() + r * (K + 1);
            d.q_iou.assign(qr, qr + K + 1);
        }
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<ScoredBox> predict(const ModelState& s, const Tensor& image, double score_threshold,
                               double nms_threshold) {
    if (score_threshold < 0.0 || score_threshold > 1.0 || nms_threshold < 0.0 ||
        nms_threshold > 1.0)
        throw std::invalid_argument("predict: thresholds must be in [0,1]");

    TrunkCache tc;
    RpnCache rpc;
    trunk_rpn_forward(s, image, tc, rpc);
    const std::vector<Proposal> props = extract_proposals(s.arch, rpc);
    std::vector<BBox> boxes;
    boxes.reserve(props.size());
    for (const auto& pr : props) boxes.push_back(pr.box);
    RoiCache rc;
    roi_forward(s, tc, boxes, nullptr, rc);

    const int K = s.arch.num_classes;
    const double S = s.arch.image_size;
    std::vector<ScoredBox> cands;
    for (size_t r = 0; r < boxes.size(); ++r) {
        const double* sr = rc.cls_s.data() + r * (K + 1);
        const double* dr = rc.reg.data() + r * 4 * K;
        for (int k = 0; k < K; ++k) {
            if (sr[k] < score_threshold) continue;
            const DeltaVec d{dr[4 * k], dr[4 * k + 1], dr[4 * k + 2], dr[4 * k + 3]};
            ScoredBox sb;
            sb.box = decode_deltas_clamped(boxes[r], clamp_delta(d), S, S);
            sb.score = sr[k];
            sb.class_id = k;
            sb.q_iou = s.arch.branch_enabled ? rc.q.v[r * (K + 1) + k] : 1.0;
            cands.push_back(sb);
        }
    }
    return nms(cands, nms_threshold);
}

// ---- gradient check -------------------------------------------------------

double gradient_check(ModelState& state,
                      const std::function<double(const ModelState&, ParamGrads*)>& loss_fn,
                      double epsilon, double subsample_fraction, uint64_t seed) {
    if (epsilon < 1e-7 || epsilon > 1e-3)
        throw std::invalid_argument("gradient_check: epsilon out of range");

    ParamGrads analytic = ParamGrads::zeros_like(state);
    loss_fn(state, &analytic);

    const size_t total = state.param_count();
    const size_t n =
        std::max<size_t>(1, static_cast<size_t>(std::llround(subsample_fraction * total)));

    Rng r(seed);
    double max_rel = 0.0;
    for (size_t k = 0; k < n; ++k) {
        size_t idx = r.next_u64() % total;
        size_t ti = 0;
        while (idx >= state.p[ti].size()) {
            idx -= state.p[ti].size();
            ++ti;
        }
        double& slot = state.p[ti].v[idx];
        const double saved = slot;
        slot = saved + epsilon;
        const double lp = loss_fn(state, nullptr);
        slot = saved - epsilon;
        const double lm = loss_fn(state, nullptr);
        slot = saved;

        const double numeric = (lp - lm) / (2.0 * epsilon);
        const double an = analytic.g[ti].v[idx];
        const double denom = std::max({std::abs(an), std::abs(numeric), 1e-5});
        max_rel = std::max(max_rel, std::abs(an - numeric) / denom);
    }
    return max_rel;
}

}  // namespace ilnet
