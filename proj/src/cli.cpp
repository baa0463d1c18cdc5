#include "ilnet/cli.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "ilnet/checkpoint.hpp"
#include "ilnet/config.hpp"
#include "ilnet/metrics.hpp"
#include "ilnet/plot.hpp"
#include "ilnet/trainer.hpp"

namespace fs = std::filesystem;

namespace ilnet {

namespace {

int fail_cmd(const std::string& msg) {
    std::cerr << "error: " << msg << "\n";
    return 1;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string csv_num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

// One training run into dir; returns the final AP.
APReport run_once(const RunConfig& cfg, const fs::path& dir) {
    fs::create_directories(dir);
    const DatasetSplit data = make_splits(cfg.data);
    {
        JsonlFileSink sink((dir / "metrics.jsonl").string());
        const TrainingArtifacts art = run_training(cfg, data, sink);
        save_checkpoint((dir / "teacher.ckpt").string(), art.teacher);
        save_checkpoint((dir / "student.ckpt").string(), art.student);
        write_text(dir / "ap_report.json", ap_report_jsonl(art.final_ap) + "\n");
        write_text(dir / "ap_report.txt", ap_report_table(art.final_ap));
    }
    nlohmann::ordered_json manifest;
    manifest["config"] = config_to_json(cfg);
    manifest["seed"] = cfg.train.seed;
    nlohmann::ordered_json outputs;
    for (const char* name :
         {"metrics.jsonl", "teacher.ckpt", "student.ckpt", "ap_report.json", "ap_report.txt"})
        outputs[name] = file_hash_hex((dir / name).string());
    manifest["outputs"] = outputs;
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");

    std::ifstream rep(dir / "ap_report.json");
    nlohmann::json j;
    rep >> j;
    APReport ap;
    ap.map = j.at("map").get<double>();
    ap.ap50 = j.at("ap50").get<double>();
    ap.ap75 = j.at("ap75").get<double>();
    return ap;
}

struct SweepSpec {
    std::string parameter;
    std::vector<nlohmann::json> values;
    std::vector<uint64_t> seeds;
    std::string base_config;
};

const std::map<std::string, std::string>& sweep_key_map() {
    static const std::map<std::string, std::string> m = {
        {"beta", "train.beta"},
        {"mu", "train.mu"},
        {"theta", "train.theta"},
        {"gamma_iou", "train.gamma_iou"},
        {"branch_mask", "train.branch_mask"},
        {"filter_enabled", "train.filter_enabled"},
    };
    return m;
}

SweepSpec parse_sweep_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open sweep spec " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("sweep spec " + path + ": " + e.what());
    }
    SweepSpec spec;
    spec.parameter = j.at("parameter").get<std::string>();
    if (!sweep_key_map().count(spec.parameter))
        throw std::runtime_error("sweep spec: unknown parameter '" + spec.parameter + "'");
    if (!j.count("values") || !j["values"].is_array() || j["values"].empty())
        throw std::runtime_error("sweep spec: values must be a non-empty list");
    for (const auto& v : j["values"]) spec.values.push_back(v);
    if (!j.count("seeds") || !j["seeds"].is_array() || j["seeds"].empty())
        throw std::runtime_error("sweep spec: seeds must be a non-empty list");
    for (const auto& s : j["seeds"]) spec.seeds.push_back(s.get<uint64_t>());
    spec.base_config = j.at("base_config").get<std::string>();
    return spec;
}

std::string value_to_string(const nlohmann::json& v) {
    return v.is_string() ? v.get<std::string>() : v.dump();
}

std::string sanitize(const std::string& s) {
    std::string out;
    for (char c : s)
        out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-') ? c : '_';
    return out;
}

struct LogData {
    std::vector<double> iter, pseudo_count;
    std::vector<ShareRecord> share_terms;
    std::vector<double> eval_iter, eval_map, eval_ap50, eval_ap75;
    QualityHistogram last_hist;
    bool have_hist = false;
};

LogData parse_log(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    LogData d;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const std::exception&) {
            throw std::runtime_error(path.string() + " line " + std::to_string(lineno) +
                                     ": not valid JSON");
        }
        const std::string type = rec.value("type", "");
        if (type == "train") {
            d.iter.push_back(rec.at("iteration").get<double>());
            d.pseudo_count.push_back(rec.value("pseudo_count", 0.0));
            ShareRecord sr;
            sr.iteration = rec.at("iteration").get<int64_t>();
            sr.cls = rec.value("unsup_weighted_cls", 0.0);
            sr.reg = rec.value("unsup_weighted_reg", 0.0);
            sr.iou = rec.value("unsup_weighted_iou", 0.0);
            d.share_terms.push_back(sr);
        } else if (type == "eval" || type == "final") {
            d.eval_iter.push_back(rec.at("iteration").get<double>());
            d.eval_map.push_back(rec.at("map").get<double>());
            d.eval_ap50.push_back(rec.at("ap50").get<double>());
            d.eval_ap75.push_back(rec.at("ap75").get<double>());
        } else if (type == "pseudo_quality") {
            d.last_hist.edges = rec.at("edges").get<std::vector<double>>();
            d.last_hist.counts = rec.at("counts").get<std::vector<int64_t>>();
            d.last_hist.wrong = rec.at("wrong").get<std::vector<int64_t>>();
            d.last_hist.iteration = rec.at("iteration").get<int64_t>();
            d.have_hist = true;
        }
    }
    return d;
}

struct SummaryRow {
    std::string value;
    std::vector<double> maps, ap50s, ap75s;
};

double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

uint64_t fnv1a64(const void* data, size_t n) {
    const auto* p = static_cast<const uint8_t*>(data);
    uint64_t h = 0xcbf29ce484222325ull;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string file_hash_hex(const std::string& path) {
    const std::string bytes = read_text(path);
    char buf[32];
    std::snprintf(buf, sizeof buf, "fnv1a64:%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
    return buf;
}

std::string resolve_out_dir(const std::string& flag_value, const std::string& leaf) {
    if (!flag_value.empty()) return flag_value;
    if (const char* scratch = std::getenv("ILNET_SCRATCH"); scratch && *scratch)
        return (fs::path(scratch) / leaf).string();
    return leaf;
}

int cmd_run(const std::string& config_path, std::optional<uint64_t> seed,
            const std::string& out_dir) {
    try {
        if (!fs::exists(config_path)) return fail_cmd("config file not found: " + config_path);
        RunConfig cfg = parse_config_file(config_path);
        if (seed) cfg.train.seed = *seed;
        run_once(cfg, out_dir);
        return 0;
    } catch (const std::exception& e) {
        return fail_cmd(e.what());
    }
}

int cmd_sweep(const std::string& spec_path, const std::string& out_dir) {
    try {
        const SweepSpec spec = parse_sweep_spec(spec_path);
        const RunConfig base = parse_config_file(spec.base_config);
        fs::create_directories(out_dir);

        std::vector<SummaryRow> rows;
        for (const auto& value : spec.values) {
            SummaryRow row;
            row.value = value_to_string(value);
            for (uint64_t sd : spec.seeds) {
                RunConfig cfg = base;
                apply_override(cfg, sweep_key_map().at(spec.parameter), row.value);
                cfg.train.seed = sd;
                const fs::path dir = fs::path(out_dir) / (spec.parameter + "_" +
                                                          sanitize(row.value) + "_seed" +
                                                          std::to_string(sd));
                const APReport ap = run_once(cfg, dir);
                row.maps.push_back(ap.map);
                row.ap50s.push_back(ap.ap50);
                row.ap75s.push_back(ap.ap75);
            }
            rows.push_back(std::move(row));
        }

        std::ostringstream csv;
        csv << "parameter,value,runs,ap_mean,ap_min,ap_max,ap50_mean,ap75_mean\n";
        for (const auto& row : rows) {
            const double lo = *std::min_element(row.maps.begin(), row.maps.end());
            const double hi = *std::max_element(row.maps.begin(), row.maps.end());
            csv << spec.parameter << "," << row.value << "," << row.maps.size() << ","
                << csv_num(mean_of(row.maps)) << "," << csv_num(lo) << "," << csv_num(hi) << ","
                << csv_num(mean_of(row.ap50s)) << "," << csv_num(mean_of(row.ap75s)) << "\n";
        }
        write_text(fs::path(out_dir) / "sweep_summary.csv", csv.str());

        nlohmann::ordered_json manifest;
        manifest["spec"] = nlohmann::json::parse(read_text(spec_path));
        manifest["summary_hash"] =
            file_hash_hex((fs::path(out_dir) / "sweep_summary.csv").string());
        write_text(fs::path(out_dir) / "sweep_manifest.json", manifest.dump(2) + "\n");
        return 0;
    } catch (const std::exception& e) {
        return fail_cmd(e.what());
    }
}

int cmd_analyze(const std::string& log_dir, const std::string& out_dir) {
    try {
        const fs::path log(log_dir), out(out_dir);
        const bool have_log = fs::exists(log / "metrics.jsonl");
        const bool have_sweep = fs::exists(log / "sweep_summary.csv");
        if (!have_log && !have_sweep)
            return fail_cmd("no metrics.jsonl or sweep_summary.csv in " + log_dir);
        fs::create_directories(out);

        if (have_log) {
            const LogData d = parse_log(log / "metrics.jsonl");

            {
                std::ostringstream csv;
                csv << "iteration,pseudo_count\n";
                for (size_t i = 0; i < d.iter.size(); ++i)
                    csv << static_cast<int64_t>(d.iter[i]) << ","
                        << static_cast<int64_t>(d.pseudo_count[i]) << "\n";
                write_text(out / "pseudo_count.csv", csv.str());
                if (!d.iter.empty()) {
                    Series s{"PSEUDO", d.iter, d.pseudo_count, {}};
                    write_png((out / "pseudo_count.png").string(),
                              line_plot("PSEUDO-LABEL COUNT", "ITERATION", "COUNT", {s}));
                }
            }

            {
                const std::vector<ShareRecord> shares = loss_share_series(d.share_terms);
                std::ostringstream csv;
                csv << "iteration,cls_share,reg_share,iou_share\n";
                for (const auto& r : shares)
                    csv << r.iteration << "," << csv_num(r.cls) << "," << csv_num(r.reg) << ","
                        << csv_num(r.iou) << "\n";
                write_text(out / "loss_shares.csv", csv.str());
                if (!shares.empty()) {
                    Series sc{"CLS", {}, {}, {}}, sr{"REG", {}, {}, {}}, si{"IOU", {}, {}, {}};
                    for (const auto& r : shares) {
                        const double it = static_cast<double>(r.iteration);
                        sc.x.push_back(it);
                        sc.y.push_back(r.cls);
                        sr.x.push_back(it);
                        sr.y.push_back(r.reg);
                        si.x.push_back(it);
                        si.y.push_back(r.iou);
                    }
                    write_png((out / "loss_shares.png").string(),
                              line_plot("UNSUPERVISED LOSS SHARES", "ITERATION", "SHARE",
                                        {sc, sr, si}));
                }
            }

            {
                std::ostringstream csv;
                csv << "iteration,map,ap50,ap75\n";
                for (size_t i = 0; i < d.eval_iter.size(); ++i)
                    csv << static_cast<int64_t>(d.eval_iter[i]) << "," << csv_num(d.eval_map[i])
                        << "," << csv_num(d.eval_ap50[i]) << "," << csv_num(d.eval_ap75[i])
                        << "\n";
                write_text(out / "eval_map.csv", csv.str());
                if (!d.eval_iter.empty()) {
                    Series sm{"MAP", d.eval_iter, d.eval_map, {}};
                    Series s5{"AP50", d.eval_iter, d.eval_ap50, {}};
                    Series s7{"AP75", d.eval_iter, d.eval_ap75, {}};
                    write_png((out / "eval_map.png").string(),
                              line_plot("HELD-OUT AP", "ITERATION", "AP", {sm, s5, s7}));
                }
            }

            if (d.have_hist) {
                write_text(out / "pseudo_quality.csv", histogram_csv(d.last_hist));
                std::vector<std::string> labels;
                std::vector<double> counts, wrong;
                for (size_t b = 0; b < d.last_hist.counts.size(); ++b) {
                    labels.push_back(csv_num(d.last_hist.edges[b]).substr(0, 4));
                    counts.push_back(static_cast<double>(d.last_hist.counts[b]));
                    wrong.push_back(static_cast<double>(d.last_hist.wrong[b]));
                }
                write_png((out / "pseudo_quality.png").string(),
                          bar_plot("PSEUDO-LABEL QUALITY", "TRUE IOU", "COUNT", labels, counts,
                                   wrong, "ALL", "WRONG CLASS"));
            } else {
                write_text(out / "pseudo_quality.csv",
                           "bin_low,bin_high,count,wrong_class_count\n");
            }
        }

        if (have_sweep) {
            const std::string csv = read_text(log / "sweep_summary.csv");
            write_text(out / "sweep_comparison.csv", csv);
            std::istringstream in(csv);
            std::string line;
            std::getline(in, line);  // header
            std::vector<std::string> labels;
            std::vector<double> means;
            while (std::getline(in, line)) {
                std::stringstream ls(line);
                std::string parameter, value, runs, mean;
                std::getline(ls, parameter, ',');
                std::getline(ls, value, ',');
                std::getline(ls, runs, ',');
                std::getline(ls, mean, ',');
                if (mean.empty()) continue;
                labels.push_back(value);
                means.push_back(std::stod(mean));
            }
            if (!means.empty())
                write_png((out / "sweep_comparison.png").string(),
                          bar_plot("SWEEP MEAN AP", "VALUE", "AP", labels, means, {}, "AP", ""));
        }
        return 0;
    } catch (const std::exception& e) {
        return fail_cmd(e.what());
    }
}

}  // namespace ilnet
