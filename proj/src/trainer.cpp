#include "ilnet/trainer.hpp"

#include <cmath>
#include <stdexcept>

namespace ilnet {

JsonlFileSink::JsonlFileSink(const std::string& path) : out(path) {
    if (!out) throw std::runtime_error("JsonlFileSink: cannot open " + path);
}

void JsonlFileSink::record(const nlohmann::ordered_json& rec) { out << rec.dump() << "\n"; }

SgdState SgdState::zeros_like(const ModelState& s) {
    SgdState o;
    for (const auto& t : s.p) o.velocity.emplace_back(Tensor::zeros(t.shape));
    return o;
}

void sgd_step(ModelState& s, const ParamGrads& g, SgdState& opt, double lr, double wd,
              double momentum) {
    for (size_t i = 0; i < s.p.size(); ++i) {
        double* th = s.p[i].data();
        const double* gr = g.g[i].data();
        double* v = opt.velocity[i].data();
        const size_t n = s.p[i].size();
        for (size_t k = 0; k < n; ++k) {
            v[k] = momentum * v[k] + (gr[k] + wd * th[k]);
            th[k] -= lr * v[k];
        }
    }
}

void ema_update(ModelState& teacher, const ModelState& student, double m) {
    if (!teacher.same_shape(student))
        throw std::invalid_argument("ema_update: teacher/student shape mismatch");
    for (size_t i = 0; i < teacher.p.size(); ++i) {
        double* t = teacher.p[i].data();
        const double* s = student.p[i].data();
        const size_t n = teacher.p[i].size();
        for (size_t k = 0; k < n; ++k) t[k] = m * t[k] + (1.0 - m) * s[k];
    }
}

std::vector<std::vector<PseudoLabel>> generate_pseudo_labels(const ModelState& teacher,
                                                             const std::vector<Tensor>& images,
                                                             const HyperConfig& cfg) {
    std::vector<std::vector<PseudoLabel>> out;
    out.reserve(images.size());
    for (const auto& img : images) {
        const std::vector<ScoredBox> dets = predict(teacher, img, 0.0, cfg.pseudo_nms);
        std::vector<PseudoLabel> kept;
        for (const auto& d : dets) {
            if (cfg.filter_enabled && d.q_iou < cfg.theta) continue;  // IoU filter first
            if (d.score < cfg.delta) continue;
            PseudoLabel p;
            p.box = d.box;
            p.class_id = d.class_id;
            p.confidence = d.score;
            p.q_iou = d.q_iou;
            p.source_iteration = teacher.iteration;
            kept.push_back(p);
        }
        out.push_back(std::move(kept));
    }
    return out;
}

namespace {

void scale_headgrads(HeadGrads& hg, double w_cls, double w_reg, double w_iou) {
    for (double& v : hg.g_obj.v) v *= w_cls;
    for (double& v : hg.g_cls_logit.v) v *= w_cls;
    for (double& v : hg.g_dlt.v) v *= w_reg;
    for (double& v : hg.g_reg.v) v *= w_reg;
    for (double& v : hg.g_qlogit.v) v *= w_iou;
}

void add_breakdown(LossBreakdown& acc, const LossBreakdown& b, double scale) {
    acc.rpn_cls += scale * b.rpn_cls;
    acc.rpn_reg += scale * b.rpn_reg;
    acc.roi_cls += scale * b.roi_cls;
    acc.roi_reg += scale * b.roi_reg;
    acc.iou_branch += scale * b.iou_branch;
}

// One image's supervised contribution: plan, forward, loss, backward into pg.
LossBreakdown supervised_image_pass(ModelState& student, const Scene& scene,
                                    const HyperConfig& cfg, double inv_batch, Rng& plan_rng,
                                    ParamGrads& pg) {
    const ImageTargets targets{scene.labels()};
    const TrainPlan plan = make_plan(student, scene.image, targets, cfg.plan_config(), plan_rng);
    const ForwardCache cache = full_forward(student, scene.image, plan.rois, &plan.sel_class);
    StreamLossResult r =
        stream_loss(student, cache, plan, targets, cfg.weights, Stream::supervised, true);
    scale_headgrads(r.grads, inv_batch, inv_batch, inv_batch);
    backward(student, cache, r.grads, pg);
    return r.breakdown;
}

}  // namespace

LossBreakdown train_step_burn_up(ModelState& student, SgdState& opt,
                                 const std::vector<Scene>& labeled_batch,
                                 const HyperConfig& cfg, double lr, Rng& plan_rng) {
    const int B = static_cast<int>(labeled_batch.size());
    ParamGrads pg = ParamGrads::zeros_like(student);
    LossBreakdown total;
    total.stream = Stream::supervised;
    for (const Scene& scene : labeled_batch) {
        const LossBreakdown b =
            supervised_image_pass(student, scene, cfg, 1.0 / B, plan_rng, pg);
        add_breakdown(total, b, 1.0 / B);
    }
    sgd_step(student, pg, opt, lr, cfg.weight_decay, cfg.momentum);
    return total;
}

MutualStepResult train_step_mutual(ModelState& student, ModelState& teacher, SgdState& opt,
                                   const std::vector<Scene>& labeled_batch,
                                   const std::vector<UnlabeledViews>& unlabeled_batch,
                                   const HyperConfig& cfg, double lr, Rng& plan_rng) {
    for (const auto& v : unlabeled_batch)
        if (v.id != v.weak.id)
            throw std::logic_error("train_step_mutual: weak/strong view pairing broken");

    MutualStepResult res;
    res.sup.stream = Stream::supervised;
    res.unsup.stream = Stream::unsupervised;

    const int Bl = static_cast<int>(labeled_batch.size());
    const int Bu = static_cast<int>(unlabeled_batch.size());
    ParamGrads pg = ParamGrads::zeros_like(student);

    for (const Scene& scene : labeled_batch) {
        const LossBreakdown b =
            supervised_image_pass(student, scene, cfg, 1.0 / Bl, plan_rng, pg);
        add_breakdown(res.sup, b, 1.0 / Bl);
    }

    // teacher reads the weak views only
    std::vector<Tensor> weak_images;
    weak_images.reserve(unlabeled_batch.size());
    for (const auto& v : unlabeled_batch) weak_images.push_back(v.weak.image);
    const auto pseudo = generate_pseudo_labels(teacher, weak_images, cfg);

    const LossWeights& w = cfg.weights;
    for (int i = 0; i < Bu; ++i) {
        res.pseudo_count += static_cast<int>(pseudo[static_cast<size_t>(i)].size());
        if (pseudo[static_cast<size_t>(i)].empty()) continue;  // zero contribution

        ImageTargets targets;
        for (const auto& p : pseudo[static_cast<size_t>(i)])
            targets.boxes.emplace_back(p.box, p.class_id);

        const Tensor& strong = unlabeled_batch[static_cast<size_t>(i)].strong;
        const TrainPlan plan = make_plan(student, strong, targets, cfg.plan_config(), plan_rng);
        const ForwardCache cache = full_forward(student, strong, plan.rois, &plan.sel_class);
        StreamLossResult r =
            stream_loss(student, cache, plan, targets, w, Stream::unsupervised, true);
        scale_headgrads(r.grads, w.alpha / Bu, w.beta / Bu, w.gamma_iou / Bu);
        backward(student, cache, r.grads, pg);
        add_breakdown(res.unsup, r.breakdown, 1.0 / Bu);
    }

    sgd_step(student, pg, opt, lr, cfg.weight_decay, cfg.momentum);
    ema_update(teacher, student, cfg.ema_momentum);
    return res;
}

namespace {

nlohmann::ordered_json eval_model(const ModelState& m, const std::vector<Scene>& eval_set,
                                  const HyperConfig& cfg, APReport* out_report) {
    std::vector<std::vector<ScoredBox>> dets;
    std::vector<std::vector<std::pair<BBox, int>>> gts;
    dets.reserve(eval_set.size());
    gts.reserve(eval_set.size());
    for (const Scene& s : eval_set) {
        std::vector<ScoredBox> d = predict(m, s.image, cfg.test_score_threshold, cfg.test_nms);
        if (cfg.eval_iou_filter) {
            std::vector<ScoredBox> kept;
            for (const auto& b : d)
                if (b.q_iou >= cfg.theta) kept.push_back(b);
            d = std::move(kept);
        }
        dets.push_back(std::move(d));
        gts.push_back(s.labels());
    }
    const APReport rep =
        evaluate_ap(dets, gts, coco_iou_thresholds(), m.arch.num_classes);
    if (out_report) *out_report = rep;
    nlohmann::ordered_json j;
    j["map"] = rep.map;
    j["ap50"] = rep.ap50;
    j["ap75"] = rep.ap75;
    return j;
}

}  // namespace

TrainingArtifacts run_training(const RunConfig& cfg, const DatasetSplit& data,
                               MetricsSink& sink) {
    if (!cfg.train.valid()) throw std::invalid_argument("run_training: invalid HyperConfig");
    if (data.labeled.empty()) throw std::invalid_argument("run_training: no labeled scenes");

    const HyperConfig& hp = cfg.train;
    const int total = hp.total_iters;
    const int burn_up = hp.resolved_burn_up();

    ArchConfig arch = cfg.arch;
    arch.image_size = cfg.data.image_size;
    arch.num_classes = cfg.data.num_classes;
    arch.branch_mask = hp.branch_mask;
    arch.branch_enabled = hp.branch_enabled;

    TrainingArtifacts art;
    art.student = ModelState::init(arch, seed_stream(hp.seed, 1));
    art.teacher = art.student;
    art.mid_teacher = art.student;

    SgdState opt = SgdState::zeros_like(art.student);
    Rng batch_rng(seed_stream(hp.seed, 2));
    Rng weak_rng(seed_stream(hp.seed, 3));
    Rng strong_rng(seed_stream(hp.seed, 4));
    Rng plan_rng(seed_stream(hp.seed, 5));

    const std::vector<Scene> eval_set = make_eval_set(cfg.data, hp.eval_scene_count, 1);
    const int n_lab = static_cast<int>(data.labeled.size());
    const int n_unl = static_cast<int>(data.unlabeled.size());
    const int mid_iter = burn_up + (total - burn_up) / 2;

    for (int it = 0; it < total; ++it) {
        double lr = hp.lr;
        if (it >= total - 10) lr *= 0.1;
        if (it >= total - 5) lr *= 0.1;

        std::vector<Scene> labeled_batch;
        for (int b = 0; b < hp.batch_labeled; ++b)
            labeled_batch.push_back(weak_augment(
                data.labeled[static_cast<size_t>(batch_rng.uniform_int(0, n_lab - 1))],
                weak_rng));

        const bool mutual = it >= burn_up;
        LossBreakdown sup;
        MutualStepResult step;
        try {
            if (!mutual) {
                sup = train_step_burn_up(art.student, opt, labeled_batch, hp, lr, plan_rng);
            } else {
                if (it == burn_up) art.teacher = art.student;
                std::vector<UnlabeledViews> views;
                for (int b = 0; b < hp.batch_unlabeled && n_unl > 0; ++b) {
                    UnlabeledViews v;
                    v.weak = weak_augment(
                        data.unlabeled[static_cast<size_t>(batch_rng.uniform_int(0, n_unl - 1))],
                        weak_rng);
                    v.id = v.weak.id;
                    v.strong = strong_augment(v.weak.image, strong_rng);
                    views.push_back(std::move(v));
                }
                step = train_step_mutual(art.student, art.teacher, opt, labeled_batch, views, hp,
                                         lr, plan_rng);
                sup = step.sup;
            }
        } catch (const std::exception& e) {
            throw std::runtime_error("iteration " + std::to_string(it) + ": " + e.what());
        }
        art.student.iteration = it + 1;
        if (mutual) art.teacher.iteration = it + 1;

        if ((it + 1) % hp.log_interval == 0 || it + 1 == total) {
            nlohmann::ordered_json rec;
            rec["type"] = "train";
            rec["iteration"] = it + 1;
            rec["stage"] = mutual ? "mutual" : "burn_up";
            rec["lr"] = lr;
            rec["sup_rpn_cls"] = sup.rpn_cls;
            rec["sup_rpn_reg"] = sup.rpn_reg;
            rec["sup_roi_cls"] = sup.roi_cls;
            rec["sup_roi_reg"] = sup.roi_reg;
            rec["sup_iou_branch"] = sup.iou_branch;
            rec["sup_total"] = sup.weighted_total(hp.weights);
            rec["unsup_rpn_cls"] = step.unsup.rpn_cls;
            rec["unsup_rpn_reg"] = step.unsup.rpn_reg;
            rec["unsup_roi_cls"] = step.unsup.roi_cls;
            rec["unsup_roi_reg"] = step.unsup.roi_reg;
            rec["unsup_iou_branch"] = step.unsup.iou_branch;
            const LossWeights& w = hp.weights;
            rec["unsup_weighted_cls"] = w.alpha * step.unsup.cls();
            rec["unsup_weighted_reg"] = w.beta * step.unsup.reg();
            rec["unsup_weighted_iou"] = w.gamma_iou * step.unsup.iou_branch;
            rec["unsup_weighted_total"] = step.unsup.weighted_total(w);
            rec["total"] = sup.weighted_total(w) + step.unsup.weighted_total(w);
            rec["pseudo_count"] = step.pseudo_count;
            sink.record(rec);
        }

        if ((it + 1) % hp.eval_interval == 0) {
            const ModelState& m = mutual ? art.teacher : art.student;
            nlohmann::ordered_json rec;
            rec["type"] = "eval";
            rec["iteration"] = it + 1;
            rec["model"] = mutual ? "teacher" : "student";
            rec.update(eval_model(m, eval_set, hp, nullptr));
            sink.record(rec);
        }

        if (mutual && (it + 1) % hp.hist_interval == 0 && n_unl > 0) {
            const int n_hist = std::min(hp.hist_scene_count, n_unl);
            std::vector<Tensor> images;
            std::vector<std::vector<std::pair<BBox, int>>> gts;
            for (int i = 0; i < n_hist; ++i) {
                images.push_back(data.unlabeled[static_cast<size_t>(i)].image);
                gts.push_back(data.unlabeled[static_cast<size_t>(i)].hidden_labels_for_analysis());
            }
            const auto pls = generate_pseudo_labels(art.teacher, images, hp);
            std::vector<std::vector<ScoredBox>> boxes(pls.size());
            for (size_t i = 0; i < pls.size(); ++i)
                for (const auto& p : pls[i])
                    boxes[i].push_back(ScoredBox{p.box, p.confidence, p.class_id, p.q_iou});
            QualityHistogram h = pseudo_quality_histogram(boxes, gts, 20);
            h.iteration = it + 1;
            nlohmann::ordered_json rec;
            rec["type"] = "pseudo_quality";
            rec["iteration"] = it + 1;
            rec["edges"] = h.edges;
            rec["counts"] = h.counts;
            rec["wrong"] = h.wrong;
            sink.record(rec);
        }

        if (it + 1 == mid_iter && mutual) art.mid_teacher = art.teacher;
    }

    art.iterations = total;
    if (total > 0) {
        const std::vector<Scene> final_set =
            make_eval_set(cfg.data, hp.final_eval_scene_count, 2);
        const ModelState& final_model = total > burn_up ? art.teacher : art.student;
        nlohmann::ordered_json rec;
        rec["type"] = "final";
        rec["iteration"] = total;
        rec["model"] = total > burn_up ? "teacher" : "student";
        rec.update(eval_model(final_model, final_set, hp, &art.final_ap));
        sink.record(rec);
    }
    return art;
}

}  // namespace ilnet
