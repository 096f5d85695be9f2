#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "maskprune/analysis.hpp"
#include "maskprune/error.hpp"
#include "maskprune/harness.hpp"

namespace maskprune {

enum class ReportFormat { Json, Csv };

inline std::optional<ReportFormat> parse_format(std::string_view name) {
    if (name == "json") return ReportFormat::Json;
    if (name == "csv") return ReportFormat::Csv;
    return std::nullopt;
}

/// Rounds to 6 decimal places; every float in a report is stored this way.
inline double round6(double v) { return std::round(v * 1e6) / 1e6; }

inline std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

inline nlohmann::json to_json(const FlopsReport& f) {
    return {{"baseline", f.baseline}, {"pruned", f.pruned}, {"ratio", round6(f.ratio)},
            {"L", f.layers},          {"K", f.steps},       {"n", f.n},
            {"n_r", f.n_r},           {"d", f.d},           {"mu", f.mu}};
}

inline FlopsReport flops_from_json(const nlohmann::json& j) {
    FlopsReport f;
    f.baseline = j.at("baseline").get<FlopCount>();
    f.pruned = j.at("pruned").get<FlopCount>();
    f.ratio = j.at("ratio").get<double>();
    f.layers = j.at("L").get<FlopCount>();
    f.steps = j.at("K").get<FlopCount>();
    f.n = j.at("n").get<FlopCount>();
    f.n_r = j.at("n_r").get<FlopCount>();
    f.d = j.at("d").get<FlopCount>();
    f.mu = j.at("mu").get<FlopCount>();
    return f;
}

inline nlohmann::json to_json(const SimilarityCurve& c) {
    nlohmann::json sims = nlohmann::json::array();
    for (double s : c.sims) sims.push_back(round6(s));
    return {{"steps", c.steps}, {"sims", sims}, {"sample_count", c.sample_count}};
}

inline SimilarityCurve similarity_from_json(const nlohmann::json& j) {
    SimilarityCurve c;
    c.steps = j.at("steps").get<std::vector<std::size_t>>();
    c.sims = j.at("sims").get<std::vector<double>>();
    c.sample_count = j.at("sample_count").get<std::size_t>();
    return c;
}

inline nlohmann::json to_json(const VariantResult& v) {
    nlohmann::json j = {
        {"name", v.name},
        {"strategy", v.strategy},
        {"scorer", v.scorer},
        {"r", round6(v.ratio)},
        {"samples", v.samples},
    };
    if (v.accuracy) {
        j["accuracy"] = round6(*v.accuracy);
    }
    j["latency_s_per_sample"] = round6(v.latency_s_per_sample);
    j["throughput_tok_per_s"] = round6(v.throughput_tok_per_s);
    j["mean_visual_tokens"] = round6(v.mean_visual_tokens);
    j["flops"] = to_json(v.flops);
    return j;
}

inline VariantResult variant_from_json(const nlohmann::json& j) {
    VariantResult v;
    v.name = j.at("name").get<std::string>();
    v.strategy = j.at("strategy").get<std::string>();
    v.scorer = j.at("scorer").get<std::string>();
    v.ratio = j.at("r").get<double>();
    v.samples = j.at("samples").get<std::size_t>();
    if (j.contains("accuracy")) {
        v.accuracy = j.at("accuracy").get<double>();
    }
    v.latency_s_per_sample = j.at("latency_s_per_sample").get<double>();
    v.throughput_tok_per_s = j.at("throughput_tok_per_s").get<double>();
    v.mean_visual_tokens = j.at("mean_visual_tokens").get<double>();
    v.flops = flops_from_json(j.at("flops"));
    return v;
}

/// Key order is stable: nlohmann::json keeps keys sorted.
inline nlohmann::json to_json(const BenchReport& r) {
    nlohmann::json variants = nlohmann::json::array();
    for (const auto& v : r.variants) variants.push_back(to_json(v));
    nlohmann::json j = {{"experiment", r.experiment}, {"config", r.config}, {"variants", variants}};
    if (r.similarity) {
        j["similarity"] = to_json(*r.similarity);
    }
    return j;
}

inline BenchReport report_from_json(const nlohmann::json& j) {
    BenchReport r;
    r.experiment = j.at("experiment").get<std::string>();
    r.config = j.at("config");
    for (const auto& v : j.at("variants")) r.variants.push_back(variant_from_json(v));
    if (j.contains("similarity")) {
        r.similarity = similarity_from_json(j.at("similarity"));
    }
    return r;
}

inline const char* kCsvHeader =
    "experiment,variant,strategy,scorer,r,samples,accuracy,latency_s_per_sample,throughput_tok_per_s,"
    "mean_visual_tokens,flops_baseline,flops_pruned,flops_ratio,similarity_min,similarity_curve";

/// Header plus one row per variant. Absent values are empty cells.
inline void write_csv(std::ostream& out, const BenchReport& r) {
    out << kCsvHeader << '\n';
    std::string sim_min;
    std::string sim_curve;
    if (r.similarity && !r.similarity->sims.empty()) {
        sim_min = fixed6(r.similarity->min());
        for (std::size_t i = 0; i < r.similarity->sims.size(); ++i) {
            sim_curve += (i ? ";" : "") + fixed6(r.similarity->sims[i]);
        }
    }
    for (const auto& v : r.variants) {
        out << r.experiment << ',' << v.name << ',' << v.strategy << ',' << v.scorer << ',' << fixed6(v.ratio) << ','
            << v.samples << ',' << (v.accuracy ? fixed6(*v.accuracy) : "") << ',' << fixed6(v.latency_s_per_sample)
            << ',' << fixed6(v.throughput_tok_per_s) << ',' << fixed6(v.mean_visual_tokens) << ','
            << v.flops.baseline << ',' << v.flops.pruned << ',' << fixed6(v.flops.ratio) << ',' << sim_min << ','
            << sim_curve << '\n';
    }
}

/// Curve as "k,sim" rows.
inline void write_similarity_csv(std::ostream& out, const SimilarityCurve& c) {
    out << "k,sim,samples\n";
    for (std::size_t i = 0; i < c.sims.size(); ++i) {
        out << c.steps[i] << ',' << fixed6(c.sims[i]) << ',' << c.sample_count << '\n';
    }
}

inline void write_report(std::ostream& out, const BenchReport& r, ReportFormat format) {
    if (format == ReportFormat::Json) {
        out << to_json(r).dump(2) << '\n';
    } else {
        write_csv(out, r);
    }
}

inline void emit_report(const BenchReport& r, const std::string& path, ReportFormat format) {
    std::ofstream out(path);
    if (!out) {
        throw Error("emit_report: cannot open '" + path + "' for writing");
    }
    write_report(out, r, format);
    if (!out) {
        throw Error("emit_report: write to '" + path + "' failed");
    }
}

}  // namespace maskprune
