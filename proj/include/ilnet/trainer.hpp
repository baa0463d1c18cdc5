#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "ilnet/losses.hpp"
#include "ilnet/metrics.hpp"
#include "ilnet/model.hpp"
#include "ilnet/synthdata.hpp"

namespace ilnet {

struct HyperConfig {
    // thresholds
    double u = 0.5;        // foreground matching
    double mu = 0.75;      // high-quality training target
    double theta = 0.4;    // IoU-score inference filter
    double delta = 0.7;    // class-confidence filter
    LossWeights weights;
    double ema_momentum = 0.9996;
    int burn_up_iters = -1;  // negative: resolved to total_iters/6
    int total_iters = 6000;
    double lr = 0.0075;
    double weight_decay = 1e-4;
    double momentum = 0.9;
    int batch_labeled = 2;
    int batch_unlabeled = 2;
    BranchInputMask branch_mask;  // copied into the architecture at model build
    bool branch_enabled = true;
    bool filter_enabled = true;
    bool eval_iou_filter = false;  // apply the q filter at benchmark evaluation too

    // loop plumbing
    int roi_batch = 32;
    double roi_fg_fraction = 0.25;
    double pseudo_nms = 0.5;
    double test_nms = 0.5;
    double test_score_threshold = 0.05;
    int log_interval = 50;
    int eval_interval = 500;
    int hist_interval = 500;
    int eval_scene_count = 64;
    int final_eval_scene_count = 256;
    int hist_scene_count = 64;
    uint64_t seed = 1;

    int resolved_burn_up() const { return burn_up_iters < 0 ? total_iters / 6 : burn_up_iters; }
    bool valid() const {
        return u > 0 && u <= 1 && mu >= u && mu < 1 && theta >= 0 && theta <= 1 && delta >= 0 &&
               delta <= 1 && ema_momentum >= 0 && ema_momentum <= 1 && total_iters >= 0 &&
               resolved_burn_up() <= total_iters && lr > 0 && batch_labeled > 0 &&
               batch_unlabeled > 0 && roi_batch > 0 && log_interval > 0 && eval_interval > 0 &&
               hist_interval > 0 && branch_mask.valid();
    }
    PlanConfig plan_config() const {
        PlanConfig pc;
        pc.u = u;
        pc.mu = mu;
        pc.roi_batch = roi_batch;
        pc.roi_fg_fraction = roi_fg_fraction;
        return pc;
    }
};

struct RunConfig {
    DataConfig data;
    ArchConfig arch;
    HyperConfig train;
};

struct PseudoLabel {
    BBox box;
    int class_id = 0;
    double confidence = 0.0;
    double q_iou = 1.0;
    int64_t source_iteration = 0;
};

struct MetricsSink {
    virtual ~MetricsSink() = default;
    virtual void record(const nlohmann::ordered_json& rec) = 0;
};

struct MemorySink final : MetricsSink {
    std::vector<nlohmann::ordered_json> records;
    void record(const nlohmann::ordered_json& rec) override { records.push_back(rec); }
};

struct JsonlFileSink final : MetricsSink {
    std::ofstream out;
    explicit JsonlFileSink(const std::string& path);
    void record(const nlohmann::ordered_json& rec) override;
};

struct SgdState {
    std::vector<Tensor> velocity;
    static SgdState zeros_like(const ModelState& s);
};

// v <- momentum*v + (grad + wd*theta); theta <- theta - lr*v
void sgd_step(ModelState& s, const ParamGrads& g, SgdState& opt, double lr, double wd,
              double momentum);

// theta_T <- m*theta_T + (1-m)*theta_S, every parameter. Throws on shape mismatch.
void ema_update(ModelState& teacher, const ModelState& student, double m);

// predict at threshold 0 -> per-class NMS -> IoU-score filter (drop q < theta,
// skipped when filter_enabled is false) -> confidence filter (drop score < delta).
std::vector<std::vector<PseudoLabel>> generate_pseudo_labels(const ModelState& teacher,
                                                             const std::vector<Tensor>& images,
                                                             const HyperConfig& cfg);

LossBreakdown train_step_burn_up(ModelState& student, SgdState& opt,
                                 const std::vector<Scene>& labeled_batch,
                                 const HyperConfig& cfg, double lr, Rng& plan_rng);

// Weak and strong view of one unlabeled scene; ids must agree (pairing check).
struct UnlabeledViews {
    int id = -1;
    Scene weak;
    Tensor strong;
};

struct MutualStepResult {
    LossBreakdown sup;
    LossBreakdown unsup;
    int pseudo_count = 0;
};

MutualStepResult train_step_mutual(ModelState& student, ModelState& teacher, SgdState& opt,
                                   const std::vector<Scene>& labeled_batch,
                                   const std::vector<UnlabeledViews>& unlabeled_batch,
                                   const HyperConfig& cfg, double lr, Rng& plan_rng);

struct TrainingArtifacts {
    ModelState student;
    ModelState teacher;
    ModelState mid_teacher;  // snapshot halfway through the mutual stage
    APReport final_ap;
    int64_t iterations = 0;
};

TrainingArtifacts run_training(const RunConfig& cfg, const DatasetSplit& data, MetricsSink& sink);

}  // namespace ilnet
