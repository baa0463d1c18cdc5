#include "ilnet/config.hpp"

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace ilnet {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("config: " + msg); }

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) fail("bad number '" + v + "' for '" + key + "'");
        return x;
    } catch (const std::runtime_error&) {
        throw;
    } catch (const std::exception&) {
        fail("bad number '" + v + "' for '" + key + "'");
    }
}

int64_t parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const long long x = std::stoll(v, &pos);
        if (pos != v.size()) fail("bad integer '" + v + "' for '" + key + "'");
        return x;
    } catch (const std::runtime_error&) {
        throw;
    } catch (const std::exception&) {
        fail("bad integer '" + v + "' for '" + key + "'");
    }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const unsigned long long x = std::stoull(v, &pos);
        if (pos != v.size()) fail("bad integer '" + v + "' for '" + key + "'");
        return x;
    } catch (const std::runtime_error&) {
        throw;
    } catch (const std::exception&) {
        fail("bad integer '" + v + "' for '" + key + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail("bad boolean '" + v + "' for '" + key + "' (use true/false)");
}

std::vector<double> parse_double_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, ','))
        if (!part.empty()) out.push_back(parse_double(key, part));
    if (out.empty()) fail("empty list for '" + key + "'");
    return out;
}

std::string join_doubles(const std::vector<double>& xs) {
    std::ostringstream ss;
    for (size_t i = 0; i < xs.size(); ++i) {
        if (i) ss << ",";
        ss << xs[i];
    }
    return ss.str();
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

struct KeyDef {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<nlohmann::ordered_json(const RunConfig&)> get;
};

// Canonical key table; file order and json order both follow it.
const std::vector<std::pair<std::string, KeyDef>>& key_table() {
    static const std::vector<std::pair<std::string, KeyDef>> table = [] {
        std::vector<std::pair<std::string, KeyDef>> t;
        auto add = [&t](const std::string& k, std::function<void(RunConfig&, const std::string&)> s,
                        std::function<nlohmann::ordered_json(const RunConfig&)> g) {
            t.push_back({k, KeyDef{std::move(s), std::move(g)}});
        };

#define KEY_INT(key, field)                                                             \
    add(key, [](RunConfig& c, const std::string& v) { c.field = (int)parse_int(key, v); }, \
        [](const RunConfig& c) { return nlohmann::ordered_json(c.field); })
#define KEY_U64(key, field)                                                            \
    add(key, [](RunConfig& c, const std::string& v) { c.field = parse_u64(key, v); },  \
        [](const RunConfig& c) { return nlohmann::ordered_json(c.field); })
#define KEY_DBL(key, field)                                                              \
    add(key, [](RunConfig& c, const std::string& v) { c.field = parse_double(key, v); }, \
        [](const RunConfig& c) { return nlohmann::ordered_json(c.field); })
#define KEY_BOOL(key, field)                                                           \
    add(key, [](RunConfig& c, const std::string& v) { c.field = parse_bool(key, v); }, \
        [](const RunConfig& c) { return nlohmann::ordered_json(c.field); })

        KEY_INT("data.image_size", data.image_size);
        KEY_INT("data.num_classes", data.num_classes);
        KEY_INT("data.max_objects", data.max_objects);
        KEY_INT("data.num_scenes", data.num_scenes);
        KEY_DBL("data.labeled_fraction", data.labeled_fraction);
        KEY_U64("data.seed", data.seed);
        KEY_DBL("data.noise", data.noise);
        KEY_DBL("data.min_size", data.min_size);
        KEY_DBL("data.max_size", data.max_size);
        KEY_DBL("data.min_aspect", data.min_aspect);
        KEY_DBL("data.max_aspect", data.max_aspect);

        KEY_INT("arch.c1", arch.c1);
        KEY_INT("arch.c2", arch.c2);
        KEY_INT("arch.c3", arch.c3);
        KEY_INT("arch.rpn_channels", arch.rpn_channels);
        KEY_INT("arch.roi_pool", arch.roi_pool);
        KEY_INT("arch.shared_dim", arch.shared_dim);
        KEY_INT("arch.anchor_stride", arch.anchor_stride);
        add("arch.anchor_scales",
            [](RunConfig& c, const std::string& v) {
                c.arch.anchor_scales = parse_double_list("arch.anchor_scales", v);
            },
            [](const RunConfig& c) { return nlohmann::ordered_json(c.arch.anchor_scales); });
        KEY_INT("arch.proposal_count", arch.proposal_count);
        KEY_DBL("arch.proposal_nms", arch.proposal_nms);
        KEY_INT("arch.branch_hidden", arch.branch_hidden);

        KEY_DBL("train.u", train.u);
        KEY_DBL("train.mu", train.mu);
        KEY_DBL("train.theta", train.theta);
        KEY_DBL("train.delta", train.delta);
        KEY_DBL("train.alpha", train.weights.alpha);
        KEY_DBL("train.beta", train.weights.beta);
        KEY_DBL("train.gamma_iou", train.weights.gamma_iou);
        KEY_DBL("train.gamma_focal", train.weights.gamma_focal);
        KEY_DBL("train.ema_momentum", train.ema_momentum);
        KEY_INT("train.burn_up_iters", train.burn_up_iters);
        KEY_INT("train.total_iters", train.total_iters);
        KEY_DBL("train.lr", train.lr);
        KEY_DBL("train.weight_decay", train.weight_decay);
        KEY_DBL("train.momentum", train.momentum);
        KEY_INT("train.batch_labeled", train.batch_labeled);
        KEY_INT("train.batch_unlabeled", train.batch_unlabeled);
        add("train.branch_mask",
            [](RunConfig& c, const std::string& v) {
                c.train.branch_mask = branch_mask_from_string(v);
            },
            [](const RunConfig& c) {
                return nlohmann::ordered_json(branch_mask_to_string(c.train.branch_mask));
            });
        KEY_BOOL("train.branch_enabled", train.branch_enabled);
        KEY_BOOL("train.filter_enabled", train.filter_enabled);
        KEY_BOOL("train.eval_iou_filter", train.eval_iou_filter);
        KEY_INT("train.roi_batch", train.roi_batch);
        KEY_DBL("train.roi_fg_fraction", train.roi_fg_fraction);
        KEY_DBL("train.pseudo_nms", train.pseudo_nms);
        KEY_DBL("train.test_nms", train.test_nms);
        KEY_DBL("train.test_score_threshold", train.test_score_threshold);
        KEY_INT("train.log_interval", train.log_interval);
        KEY_INT("train.eval_interval", train.eval_interval);
        KEY_INT("train.hist_interval", train.hist_interval);
        KEY_INT("train.eval_scene_count", train.eval_scene_count);
        KEY_INT("train.final_eval_scene_count", train.final_eval_scene_count);
        KEY_INT("train.hist_scene_count", train.hist_scene_count);
        KEY_U64("train.seed", train.seed);

#undef KEY_INT
#undef KEY_U64
#undef KEY_DBL
#undef KEY_BOOL
        return t;
    }();
    return table;
}

const KeyDef* find_key(const std::string& key) {
    for (const auto& [k, def] : key_table())
        if (k == key) return &def;
    return nullptr;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

std::string branch_mask_to_string(const BranchInputMask& m) {
    std::string s;
    auto app = [&s](const char* part) {
        if (!s.empty()) s += "+";
        s += part;
    };
    if (m.use_shared) app("shared");
    if (m.use_scores) app("scores");
    if (m.use_deltas) app("deltas");
    return s;
}

BranchInputMask branch_mask_from_string(const std::string& s) {
    BranchInputMask m;
    m.use_shared = m.use_scores = m.use_deltas = false;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, '+')) {
        part = trim(part);
        if (part == "shared")
            m.use_shared = true;
        else if (part == "scores")
            m.use_scores = true;
        else if (part == "deltas")
            m.use_deltas = true;
        else
            fail("bad branch mask part '" + part + "' (use shared/scores/deltas)");
    }
    if (!m.valid()) fail("branch mask must keep at least one input");
    return m;
}

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
    const KeyDef* def = find_key(key);
    if (!def) fail("unknown key '" + key + "'");
    def->set(cfg, value);
}

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            fail("line " + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
        apply_override(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    if (!cfg.data.valid()) fail("invalid data section");
    if (!cfg.train.valid()) fail("invalid train section");
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

nlohmann::ordered_json config_to_json(const RunConfig& cfg) {
    nlohmann::ordered_json j;
    for (const auto& [k, def] : key_table()) j[k] = def.get(cfg);
    return j;
}

std::string config_to_text(const RunConfig& cfg) {
    std::ostringstream out;
    for (const auto& [k, def] : key_table()) {
        const nlohmann::ordered_json v = def.get(cfg);
        if (v.is_string())
            out << k << " = " << v.get<std::string>() << "\n";
        else if (v.is_boolean())
            out << k << " = " << bool_str(v.get<bool>()) << "\n";
        else if (v.is_array())
            out << k << " = " << join_doubles(v.get<std::vector<double>>()) << "\n";
        else
            out << k << " = " << v.dump() << "\n";
    }
    return out.str();
}

}  // namespace ilnet
