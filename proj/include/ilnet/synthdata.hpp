#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ilnet/geometry.hpp"
#include "ilnet/rng.hpp"
#include "ilnet/tensor.hpp"

namespace ilnet {

struct DataConfig {
    int image_size = 64;
    int num_classes = 3;  // circle, square, triangle
    int max_objects = 3;
    int num_scenes = 200;
    double labeled_fraction = 0.10;
    uint64_t seed = 1234;
    double noise = 0.08;
    double min_size = 10.0;
    double max_size = 28.0;
    double min_aspect = 0.6;
    double max_aspect = 1.6;

    bool valid() const {
        return image_size >= 32 && num_classes >= 2 && max_objects >= 1 &&
               labeled_fraction > 0.0 && labeled_fraction <= 1.0 && min_size >= 4.0 &&
               max_size > min_size && max_size < image_size / 2.0 + 8.0 &&
               min_aspect > 0.0 && max_aspect >= min_aspect;
    }
};

// One synthetic image with its object annotations. Unlabeled scenes keep the
// annotations internally for analysis, but labels() refuses to hand them out;
// analysis code must go through hidden_labels_for_analysis().
class Scene {
  public:
    Tensor image;  // [3,S,S], values in [0,1]
    uint64_t seed = 0;
    int id = -1;

    Scene() = default;
    Scene(Tensor img, std::vector<std::pair<BBox, int>> objs, uint64_t sd)
        : image(std::move(img)), seed(sd), objects_(std::move(objs)) {}

    const std::vector<std::pair<BBox, int>>& labels() const;
    const std::vector<std::pair<BBox, int>>& hidden_labels_for_analysis() const {
        return objects_;
    }
    void hide_labels() { hidden_ = true; }
    bool labels_hidden() const { return hidden_; }
    void set_labels(std::vector<std::pair<BBox, int>> objs) { objects_ = std::move(objs); }

  private:
    std::vector<std::pair<BBox, int>> objects_;
    bool hidden_ = false;
};

struct DatasetSplit {
    std::vector<Scene> labeled;
    std::vector<Scene> unlabeled;  // labels hidden
    double labeled_fraction = 0.0;
};

struct StrongAugmentConfig {
    double p_jitter = 0.8;
    double p_grayscale = 0.2;
    double p_blur = 0.5;
    double p_cutout = 0.5;
};

Scene generate_scene(uint64_t seed, const DataConfig& config);
DatasetSplit make_splits(const DataConfig& config);

// Fresh scenes disjoint from make_splits output (held-out evaluation).
std::vector<Scene> make_eval_set(const DataConfig& config, int count, uint64_t tag);

Scene weak_augment(const Scene& scene, Rng& rng);
Tensor strong_augment(const Tensor& image, Rng& rng, const StrongAugmentConfig& cfg = {});

// Directory of PNGs plus annotations.jsonl (id, seed, hidden flag, boxes, classes).
void export_dataset(const std::string& dir, const std::vector<Scene>& scenes);
std::vector<Scene> import_dataset(const std::string& dir);

}  // namespace ilnet
