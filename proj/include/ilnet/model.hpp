#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ilnet/geometry.hpp"
#include "ilnet/tensor.hpp"

namespace ilnet {

// Which inputs the IoU branch concatenates. Excluded inputs are omitted from
// the concatenation entirely, not zeroed.
struct BranchInputMask {
    bool use_shared = true;
    bool use_scores = true;
    bool use_deltas = false;

    bool valid() const { return use_shared || use_scores || use_deltas; }
    int dim(int shared_dim, int num_classes) const {
        return (use_shared ? shared_dim : 0) + (use_scores ? num_classes + 1 : 0) +
               (use_deltas ? 4 : 0);
    }
    bool operator==(const BranchInputMask&) const = default;
};

struct ArchConfig {
    int image_size = 64;
    int num_classes = 3;
    int c1 = 8, c2 = 16, c3 = 24;     // trunk block widths
    int rpn_channels = 24;
    int roi_pool = 7;
    int shared_dim = 128;             // F
    int anchor_stride = 8;
    std::vector<double> anchor_scales = {12.0, 24.0, 48.0};
    int proposal_count = 64;          // top-N kept after proposal NMS
    double proposal_nms = 0.7;
    BranchInputMask branch_mask;
    int branch_hidden = 0;            // 0 means: same as the branch input dim
    bool branch_enabled = true;

    int grid() const { return image_size / anchor_stride; }
    int num_anchor_scales() const { return static_cast<int>(anchor_scales.size()); }
    int branch_input_dim() const { return branch_mask.dim(shared_dim, num_classes); }
    int branch_hidden_dim() const { return branch_hidden > 0 ? branch_hidden : branch_input_dim(); }
    bool valid() const {
        return image_size >= 32 && image_size % anchor_stride == 0 && num_classes >= 2 &&
               !anchor_scales.empty() && proposal_count > 0 && branch_mask.valid();
    }
};

// Fixed parameter ordering; checkpoints and EMA iterate this order.
enum ParamIndex {
    kConv1W, kConv1B, kConv2W, kConv2B, kConv3W, kConv3B,
    kRpnConvW, kRpnConvB, kRpnObjW, kRpnObjB, kRpnDeltaW, kRpnDeltaB,
    kFc1W, kFc1B, kFc2W, kFc2B, kClsW, kClsB, kRegW, kRegB,
    kBr1W, kBr1B, kBr2W, kBr2B,
    kNumParams
};

struct ParamDef {
    std::string name;
    std::vector<int> shape;
};

std::vector<ParamDef> param_defs(const ArchConfig& a);

struct ModelState {
    ArchConfig arch;
    std::vector<Tensor> p;   // kNumParams tensors, shapes per param_defs
    int64_t iteration = 0;

    static ModelState init(const ArchConfig& a, uint64_t seed);
    size_t param_count() const;
    bool same_shape(const ModelState& o) const;
};

struct ParamGrads {
    std::vector<Tensor> g;

    static ParamGrads zeros_like(const ModelState& s);
    void accumulate(const ParamGrads& o, double scale);
    void scale(double k);
};

// ---- forward caches -------------------------------------------------------

struct TrunkCache {
    Tensor a1, e1, p1;   // conv/elu/pool block 1
    Tensor a2, e2, p2;
    Tensor a3, e3, feat; // feat: [c3, G, G] at stride 8
};

struct RpnCache {
    Tensor ra, re;       // rpn conv pre/post ELU
    Tensor obj;          // [A, G, G] objectness logits
    Tensor dlt;          // [4A, G, G]
};

struct RoiCache {
    std::vector<BBox> rois;
    std::vector<int> sel_class;    // delta channel used for the branch input
    Tensor crop;                   // [R, c3*P*P]
    Tensor f1a, f1, f2a, f2;       // shared fc stack; f2 is x_sh
    Tensor cls_logit, cls_s;       // [R, K+1]
    Tensor reg;                    // [R, 4K]
    Tensor bin, b1a, b1, b2a, q;   // branch; empty tensors when disabled
};

struct ForwardCache {
    Tensor x;
    TrunkCache trunk;
    RpnCache rpn;
    RoiCache roi;
};

// Gradients w.r.t. the head outputs; backward() pushes them to parameters.
// Empty tensors are treated as zero.
struct HeadGrads {
    Tensor g_obj;        // [A, G, G]
    Tensor g_dlt;        // [4A, G, G]
    Tensor g_cls_logit;  // [R, K+1]
    Tensor g_reg;        // [R, 4K]
    Tensor g_qlogit;     // [R, K+1], gradient at the branch pre-sigmoid
};

struct Proposal {
    BBox box;
    double objectness = 0.0;
    DeltaVec delta;
};

struct Detection {
    BBox box;                      // the proposal box
    std::vector<double> scores;    // K+1, softmax
    DeltaVec deltas;               // at the predicted class
    int predicted_class = 0;       // argmax over foreground classes
    std::vector<double> x_shared;  // F
    std::vector<double> q_iou;     // K+1; empty when the branch is disabled
};

// ---- operations -----------------------------------------------------------

// Anchor boxes in (row, col, scale) order; grid^2 * |scales| entries.
std::vector<BBox> make_anchors(const ArchConfig& a);

void trunk_rpn_forward(const ModelState& s, const Tensor& image, TrunkCache& tc, RpnCache& rc);

// Scored+decoded anchors, class-agnostic NMS, top-N by objectness.
std::vector<Proposal> extract_proposals(const ArchConfig& a, const RpnCache& rc);

std::vector<Proposal> forward_proposals(const ModelState& s, const Tensor& image);

// RoI head over given boxes. frozen_sel pins the per-row delta channel
// (finite-difference checks need the selection to not flip); pass nullptr to
// select argmax of the class scores.
void roi_forward(const ModelState& s, const TrunkCache& tc, const std::vector<BBox>& rois,
                 const std::vector<int>* frozen_sel, RoiCache& rc);

// Standalone branch evaluation used by tests; model forward inlines the same math.
std::vector<double> iou_branch_forward(const std::vector<double>& x_sh,
                                       const std::vector<double>& scores,
                                       const std::vector<double>& deltas,
                                       const BranchInputMask& mask, const Tensor& w1,
                                       const Tensor& b1, const Tensor& w2, const Tensor& b2);

ForwardCache full_forward(const ModelState& s, const Tensor& image,
                          const std::vector<BBox>& rois, const std::vector<int>* frozen_sel);

void backward(const ModelState& s, const ForwardCache& c, const HeadGrads& hg, ParamGrads& out);

std::vector<Detection> forward_roi(const ModelState& s, const Tensor& image,
                                   const std::vector<BBox>& proposals);

// proposals -> RoI head -> per-class decode -> drop background -> score
// threshold -> per-class NMS. Each ScoredBox carries q at its class channel.
std::vector<ScoredBox> predict(const ModelState& s, const Tensor& image,
                               double score_threshold, double nms_threshold);

// loss_fn(state, grads): returns the loss; fills analytic gradients when
// grads is non-null. Central differences on a random parameter subsample;
// returns the max relative error.
double gradient_check(ModelState& state,
                      const std::function<double(const ModelState&, ParamGrads*)>& loss_fn,
                      double epsilon, double subsample_fraction, uint64_t seed);

}  // namespace ilnet
