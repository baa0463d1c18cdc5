#include "ilnet/synthdata.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "ilnet/image_io.hpp"

namespace ilnet {

namespace {

using ordered_json = nlohmann::ordered_json;

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// shape kinds, cycled when K > 5
enum ShapeKind { kCircle = 0, kSquare = 1, kTriangle = 2, kDiamond = 3, kRing = 4 };

bool inside_shape(int kind, double x, double y, double cx, double cy, double hw, double hh) {
    const double dx = x - cx, dy = y - cy;
    switch (kind) {
        case kCircle: {
            const double r = (dx / hw) * (dx / hw) + (dy / hh) * (dy / hh);
            return r <= 1.0;
        }
        case kSquare:
            return std::abs(dx) <= hw && std::abs(dy) <= hh;
        case kTriangle: {
            // apex at top center, base at the bottom edge
            if (dy < -hh || dy > hh) return false;
            const double half_at = (dy + hh) / (2.0 * hh) * hw;
            return std::abs(dx) <= half_at;
        }
        case kDiamond:
            return std::abs(dx) / hw + std::abs(dy) / hh <= 1.0;
        case kRing: {
            const double r = (dx / hw) * (dx / hw) + (dy / hh) * (dy / hh);
            return r <= 1.0 && r >= 0.35;
        }
        default:
            return false;
    }
}

void render_shape(Tensor& image, int kind, const BBox& box, const double color[3]) {
    const int S = image.shape[1];
    const double cx = box.cx(), cy = box.cy();
    const double hw = box.width() / 2.0, hh = box.height() / 2.0;
    const int y_lo = std::max(0, static_cast<int>(std::floor(box.y1)));
    const int y_hi = std::min(S, static_cast<int>(std::ceil(box.y2)) + 1);
    const int x_lo = std::max(0, static_cast<int>(std::floor(box.x1)));
    const int x_hi = std::min(S, static_cast<int>(std::ceil(box.x2)) + 1);
    static const double off[2] = {0.25, 0.75};
    for (int py = y_lo; py < y_hi; ++py) {
        for (int px = x_lo; px < x_hi; ++px) {
            int hits = 0;
            for (int sy = 0; sy < 2; ++sy)
                for (int sx = 0; sx < 2; ++sx)
                    if (inside_shape(kind, px + off[sx], py + off[sy], cx, cy, hw, hh)) ++hits;
            if (hits == 0) continue;
            const double cov = hits / 4.0;
            for (int c = 0; c < 3; ++c) {
                double& v = image.v[(static_cast<size_t>(c) * S + py) * S + px];
                v = clamp01((1.0 - cov) * v + cov * color[c]);
            }
        }
    }
}

}  // namespace

const std::vector<std::pair<BBox, int>>& Scene::labels() const {
    if (hidden_)
        throw std::logic_error("Scene::labels: labels are hidden on this scene");
    return objects_;
}

Scene generate_scene(uint64_t seed, const DataConfig& config) {
    if (!config.valid()) throw std::invalid_argument("generate_scene: invalid DataConfig");
    Rng r(seed);
    const int S = config.image_size;

    Tensor image = Tensor::zeros({3, S, S});
    double bg[3];
    for (int c = 0; c < 3; ++c) bg[c] = r.uniform(0.15, 0.85);
    for (int c = 0; c < 3; ++c) {
        double* plane = image.v.data() + static_cast<size_t>(c) * S * S;
        for (int k = 0; k < S * S; ++k)
            plane[k] = clamp01(bg[c] + config.noise * r.normal());
    }

    const int n_obj = r.uniform_int(1, config.max_objects);
    std::vector<std::pair<BBox, int>> objects;
    for (int i = 0; i < n_obj; ++i) {
        const int cls = r.uniform_int(0, config.num_classes - 1);
        const double w = r.uniform(config.min_size, config.max_size);
        double h = w * r.uniform(config.min_aspect, config.max_aspect);
        h = std::clamp(h, config.min_size, config.max_size);

        BBox box;
        for (int attempt = 0; attempt < 12; ++attempt) {
            const double cx = r.uniform(w / 2.0 + 1.0, S - w / 2.0 - 1.0);
            const double cy = r.uniform(h / 2.0 + 1.0, S - h / 2.0 - 1.0);
            box = BBox{cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0};
            bool crowded = false;
            for (const auto& o : objects)
                if (iou(box, o.first) > 0.3) { crowded = true; break; }
            if (!crowded) break;
        }

        double color[3];
        for (int attempt = 0; attempt < 8; ++attempt) {
            double dist = 0.0;
            for (int c = 0; c < 3; ++c) {
                color[c] = r.uniform(0.0, 1.0);
                dist += std::abs(color[c] - bg[c]);
            }
            if (dist / 3.0 >= 0.25) break;
        }

        render_shape(image, cls % 5, box, color);
        objects.emplace_back(box, cls);
    }

    return Scene(std::move(image), std::move(objects), seed);
}

DatasetSplit make_splits(const DataConfig& config) {
    if (!config.valid()) throw std::invalid_argument("make_splits: invalid DataConfig");
    const int n = config.num_scenes;
    const int n_lab = static_cast<int>(std::llround(n * config.labeled_fraction));
    if (n_lab <= 0) throw std::runtime_error("make_splits: labeled split would be empty");

    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    Rng shuffler(seed_stream(config.seed, 0xffff0001ULL));
    shuffler.shuffle(perm);

    std::vector<bool> is_labeled(n, false);
    for (int i = 0; i < n_lab; ++i) is_labeled[perm[i]] = true;

    DatasetSplit split;
    split.labeled_fraction = config.labeled_fraction;
    for (int i = 0; i < n; ++i) {
        Scene s = generate_scene(seed_stream(config.seed, static_cast<uint64_t>(i)), config);
        s.id = i;
        if (is_labeled[i]) {
            split.labeled.push_back(std::move(s));
        } else {
            s.hide_labels();
            split.unlabeled.push_back(std::move(s));
        }
    }
    return split;
}

std::vector<Scene> make_eval_set(const DataConfig& config, int count, uint64_t tag) {
    std::vector<Scene> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        Scene s = generate_scene(
            seed_stream(config.seed, 0x00e00000ULL + tag * 0x100000ULL + static_cast<uint64_t>(i)),
            config);
        s.id = 1000000 + static_cast<int>(tag) * 100000 + i;
        out.push_back(std::move(s));
    }
    return out;
}

Scene weak_augment(const Scene& scene, Rng& rng) {
    Scene out = scene;
    if (!rng.bernoulli(0.5)) return out;

    const int C = out.image.shape[0], H = out.image.shape[1], W = out.image.shape[2];
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y) {
            double* row = out.image.v.data() + (static_cast<size_t>(c) * H + y) * W;
            std::reverse(row, row + W);
        }

    std::vector<std::pair<BBox, int>> flipped;
    flipped.reserve(scene.hidden_labels_for_analysis().size());
    for (const auto& o : scene.hidden_labels_for_analysis())
        flipped.emplace_back(BBox{W - o.first.x2, o.first.y1, W - o.first.x1, o.first.y2},
                             o.second);
    out.set_labels(std::move(flipped));
    return out;
}

Tensor strong_augment(const Tensor& image, Rng& rng, const StrongAugmentConfig& cfg) {
    Tensor out = image;
    const int H = out.shape[1], W = out.shape[2];
    const size_t plane = static_cast<size_t>(H) * W;

    if (rng.uniform() < cfg.p_jitter) {
        for (int c = 0; c < 3; ++c) {
            const double scale = rng.uniform(0.6, 1.4);
            const double shift = rng.uniform(-0.1, 0.1);
            double* p = out.v.data() + c * plane;
            for (size_t k = 0; k < plane; ++k) p[k] = clamp01(p[k] * scale + shift);
        }
    }

    if (rng.uniform() < cfg.p_grayscale) {
        double* r = out.v.data();
        double* g = r + plane;
        double* b = g + plane;
        for (size_t k = 0; k < plane; ++k) {
            const double lum = 0.299 * r[k] + 0.587 * g[k] + 0.114 * b[k];
            r[k] = g[k] = b[k] = lum;
        }
    }

    if (rng.uniform() < cfg.p_blur) {
        const double sigma = rng.uniform(0.3, 1.2);
        const int radius = std::max(1, static_cast<int>(std::ceil(2.0 * sigma)));
        std::vector<double> kern(2 * radius + 1);
        double norm = 0.0;
        for (int k = -radius; k <= radius; ++k) {
            kern[k + radius] = std::exp(-0.5 * (k / sigma) * (k / sigma));
            norm += kern[k + radius];
        }
        for (double& v : kern) v /= norm;

        Tensor tmp = out;
        for (int c = 0; c < 3; ++c) {
            const double* src = out.v.data() + c * plane;
            double* dst = tmp.v.data() + c * plane;
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    double acc = 0.0;
                    for (int k = -radius; k <= radius; ++k) {
                        const int xx = std::clamp(x + k, 0, W - 1);
                        acc += kern[k + radius] * src[static_cast<size_t>(y) * W + xx];
                    }
                    dst[static_cast<size_t>(y) * W + x] = acc;
                }
        }
        for (int c = 0; c < 3; ++c) {
            const double* src = tmp.v.data() + c * plane;
            double* dst = out.v.data() + c * plane;
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    double acc = 0.0;
                    for (int k = -radius; k <= radius; ++k) {
                        const int yy = std::clamp(y + k, 0, H - 1);
                        acc += kern[k + radius] * src[static_cast<size_t>(yy) * W + x];
                    }
                    dst[static_cast<size_t>(y) * W + x] = acc;
                }
        }
    }

    if (rng.uniform() < cfg.p_cutout) {
        const double cw = rng.uniform(0.1, 0.35) * W;
        const double ch = rng.uniform(0.1, 0.35) * H;
        const int x0 = static_cast<int>(rng.uniform(0.0, W - cw));
        const int y0 = static_cast<int>(rng.uniform(0.0, H - ch));
        const int x1 = std::min(W, x0 + static_cast<int>(cw));
        const int y1 = std::min(H, y0 + static_cast<int>(ch));
        for (int c = 0; c < 3; ++c)
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x)
                    out.v[c * plane + static_cast<size_t>(y) * W + x] = 0.5;
    }

    return out;
}

void export_dataset(const std::string& dir, const std::vector<Scene>& scenes) {
    std::filesystem::create_directories(dir);
    std::ofstream ann(dir + "/annotations.jsonl");
    if (!ann) throw std::runtime_error("export_dataset: cannot write annotations in " + dir);

    for (const auto& s : scenes) {
        const int S = s.image.shape[1];
        Image img = Image::blank(S, S);
        for (int y = 0; y < S; ++y)
            for (int x = 0; x < S; ++x)
                for (int c = 0; c < 3; ++c)
                    img.px(x, y)[c] = static_cast<uint8_t>(std::lround(
                        clamp01(s.image.v[(static_cast<size_t>(c) * S + y) * S + x]) * 255.0));
        char name[32];
        std::snprintf(name, sizeof(name), "scene_%06d.png", s.id);
        write_png(dir + "/" + name, img);

        ordered_json rec;
        rec["id"] = s.id;
        rec["seed"] = s.seed;
        rec["hidden"] = s.labels_hidden();
        rec["image"] = name;
        ordered_json objs = ordered_json::array();
        for (const auto& o : s.hidden_labels_for_analysis()) {
            ordered_json j;
            j["box"] = {o.first.x1, o.first.y1, o.first.x2, o.first.y2};
            j["class"] = o.second;
            objs.push_back(j);
        }
        rec["objects"] = objs;
        ann << rec.dump() << "\n";
    }
}

std::vector<Scene> import_dataset(const std::string& dir) {
    std::ifstream ann(dir + "/annotations.jsonl");
    if (!ann) throw std::runtime_error("import_dataset: cannot open annotations in " + dir);

    std::vector<Scene> out;
    std::string line;
    while (std::getline(ann, line)) {
        if (line.empty()) continue;
        const ordered_json rec = ordered_json::parse(line);
        const Image img = read_png(dir + "/" + rec.at("image").get<std::string>());
        Tensor t = Tensor::zeros({3, img.height, img.width});
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                for (int c = 0; c < 3; ++c)
                    t.v[(static_cast<size_t>(c) * img.height + y) * img.width + x] =
                        img.px(x, y)[c] / 255.0;

        std::vector<std::pair<BBox, int>> objects;
        for (const auto& j : rec.at("objects")) {
            const auto& b = j.at("box");
            objects.emplace_back(
                BBox{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()},
                j.at("class").get<int>());
        }
        Scene s(std::move(t), std::move(objects), rec.at("seed").get<uint64_t>());
        s.id = rec.at("id").get<int>();
        if (rec.at("hidden").get<bool>()) s.hide_labels();
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace ilnet
