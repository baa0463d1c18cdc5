#include "ilnet/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ilnet {

namespace {

constexpr char kMagic[8] = {'I', 'L', 'N', 'E', 'T', 'C', 'K', '1'};

void put_f32_le(std::string& out, float f) {
    uint32_t u;
    std::memcpy(&u, &f, 4);
    out.push_back(static_cast<char>(u & 0xff));
    out.push_back(static_cast<char>((u >> 8) & 0xff));
    out.push_back(static_cast<char>((u >> 16) & 0xff));
    out.push_back(static_cast<char>((u >> 24) & 0xff));
}

float get_f32_le(const unsigned char* p) {
    const uint32_t u = static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
                       (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}

}  // namespace

nlohmann::ordered_json arch_to_json(const ArchConfig& a) {
    nlohmann::ordered_json j;
    j["image_size"] = a.image_size;
    j["num_classes"] = a.num_classes;
    j["c1"] = a.c1;
    j["c2"] = a.c2;
    j["c3"] = a.c3;
    j["rpn_channels"] = a.rpn_channels;
    j["roi_pool"] = a.roi_pool;
    j["shared_dim"] = a.shared_dim;
    j["anchor_stride"] = a.anchor_stride;
    j["anchor_scales"] = a.anchor_scales;
    j["proposal_count"] = a.proposal_count;
    j["proposal_nms"] = a.proposal_nms;
    j["branch_mask"] = {{"shared", a.branch_mask.use_shared},
                        {"scores", a.branch_mask.use_scores},
                        {"deltas", a.branch_mask.use_deltas}};
    j["branch_hidden"] = a.branch_hidden;
    j["branch_enabled"] = a.branch_enabled;
    return j;
}

ArchConfig arch_from_json(const nlohmann::ordered_json& j) {
    ArchConfig a;
    a.image_size = j.at("image_size").get<int>();
    a.num_classes = j.at("num_classes").get<int>();
    a.c1 = j.at("c1").get<int>();
    a.c2 = j.at("c2").get<int>();
    a.c3 = j.at("c3").get<int>();
    a.rpn_channels = j.at("rpn_channels").get<int>();
    a.roi_pool = j.at("roi_pool").get<int>();
    a.shared_dim = j.at("shared_dim").get<int>();
    a.anchor_stride = j.at("anchor_stride").get<int>();
    a.anchor_scales = j.at("anchor_scales").get<std::vector<double>>();
    a.proposal_count = j.at("proposal_count").get<int>();
    a.proposal_nms = j.at("proposal_nms").get<double>();
    a.branch_mask.use_shared = j.at("branch_mask").at("shared").get<bool>();
    a.branch_mask.use_scores = j.at("branch_mask").at("scores").get<bool>();
    a.branch_mask.use_deltas = j.at("branch_mask").at("deltas").get<bool>();
    a.branch_hidden = j.at("branch_hidden").get<int>();
    a.branch_enabled = j.at("branch_enabled").get<bool>();
    return a;
}

void save_checkpoint(const std::string& path, const ModelState& state) {
    nlohmann::ordered_json manifest;
    manifest["arch"] = arch_to_json(state.arch);
    manifest["iteration"] = state.iteration;
    nlohmann::ordered_json params = nlohmann::ordered_json::array();
    const auto defs = param_defs(state.arch);
    for (size_t i = 0; i < defs.size(); ++i) {
        nlohmann::ordered_json p;
        p["name"] = defs[i].name;
        p["shape"] = defs[i].shape;
        params.push_back(p);
    }
    manifest["params"] = params;
    const std::string mtext = manifest.dump();

    std::string out;
    out.append(kMagic, 8);
    const uint32_t mlen = static_cast<uint32_t>(mtext.size());
    out.push_back(static_cast<char>(mlen & 0xff));
    out.push_back(static_cast<char>((mlen >> 8) & 0xff));
    out.push_back(static_cast<char>((mlen >> 16) & 0xff));
    out.push_back(static_cast<char>((mlen >> 24) & 0xff));
    out += mtext;
    for (const auto& t : state.p)
        for (double v : t.v) put_f32_le(out, static_cast<float>(v));

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("save_checkpoint: short write to " + path);
}

ModelState load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 8) != 0)
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data()) + 8;
    const uint32_t mlen = static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
                          (static_cast<uint32_t>(p[2]) << 16) |
                          (static_cast<uint32_t>(p[3]) << 24);
    if (bytes.size() < 12 + static_cast<size_t>(mlen))
        throw std::runtime_error("load_checkpoint: truncated manifest in " + path);
    const nlohmann::ordered_json manifest =
        nlohmann::ordered_json::parse(bytes.substr(12, mlen));

    ModelState state;
    state.arch = arch_from_json(manifest.at("arch"));
    state.iteration = manifest.at("iteration").get<int64_t>();
    const auto defs = param_defs(state.arch);
    const auto& jparams = manifest.at("params");
    if (jparams.size() != defs.size())
        throw std::runtime_error("load_checkpoint: parameter count mismatch");

    size_t at = 12 + mlen;
    for (size_t i = 0; i < defs.size(); ++i) {
        if (jparams[i].at("name").get<std::string>() != defs[i].name ||
            jparams[i].at("shape").get<std::vector<int>>() != defs[i].shape)
            throw std::runtime_error("load_checkpoint: manifest disagrees with architecture at " +
                                     defs[i].name);
        Tensor t(defs[i].shape);
        if (at + 4 * t.size() > bytes.size())
            throw std::runtime_error("load_checkpoint: truncated data in " + path);
        for (size_t k = 0; k < t.size(); ++k) {
            t.v[k] = static_cast<double>(
                get_f32_le(reinterpret_cast<const unsigned char*>(bytes.data()) + at));
            at += 4;
        }
        state.p.push_back(std::move(t));
    }
    return state;
}

}  // namespace ilnet
