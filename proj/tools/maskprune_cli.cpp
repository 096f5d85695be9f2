// maskprune command-line driver.
//
//   maskprune run        one pointer task on the copy model, prints decoded ids and stats
//   maskprune similarity Sim_k curve of masked-row scores (CSV by default)
//   maskprune ablate     scorer x strategy x r grid on pointer tasks
//   maskprune bench      latency/throughput of baseline vs the configured plan
//   maskprune flops      analytic cost report only
//
// Exit codes: 0 success, 2 invalid configuration, 3 runtime error.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "maskprune/maskprune.hpp"

namespace {

using namespace maskprune;

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Overrides {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<double> ratio;
    std::optional<std::string> scorer;
    std::optional<std::string> strategy;
    std::optional<std::string> policy;
    std::string out;
    std::string format;
};

RunConfig resolve_config(const Overrides& o) {
    RunConfig cfg = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
    if (o.seed) {
        cfg.decode.seed = *o.seed;
        cfg.prune.seed = *o.seed;
        cfg.tasks.seed = *o.seed;
    }
    if (o.ratio) {
        cfg.prune.ratio = *o.ratio;
    }
    if (o.scorer) {
        auto s = parse_scorer(*o.scorer);
        if (!s) throw ConfigError("unknown scorer '" + *o.scorer + "'");
        cfg.prune.scorer = *s;
    }
    if (o.strategy) {
        if (*o.strategy == "none") {
            cfg.prune.strategy.reset();
        } else {
            auto s = parse_strategy(*o.strategy);
            if (!s) throw ConfigError("unknown strategy '" + *o.strategy + "'");
            cfg.prune.strategy = *s;
        }
    }
    if (o.policy) {
        auto p = parse_policy(*o.policy);
        if (!p) throw ConfigError("unknown policy '" + *o.policy + "'");
        cfg.decode.policy = *p;
    }
    cfg.validate();
    return cfg;
}

ReportFormat resolve_format(const Overrides& o, ReportFormat fallback) {
    if (o.format.empty()) return fallback;
    auto f = parse_format(o.format);
    if (!f) throw ConfigError("unknown format '" + o.format + "' (expected json or csv)");
    return *f;
}

void write_output(const Overrides& o, const std::string& text) {
    if (o.out.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream file(o.out);
    if (!file || !(file << text)) {
        throw Error("cannot write '" + o.out + "'");
    }
}

std::string render(const BenchReport& r, ReportFormat f) {
    std::ostringstream ss;
    write_report(ss, r, f);
    return ss.str();
}

int cmd_run(const Overrides& o) {
    const RunConfig cfg = resolve_config(o);
    const ModelConfig mc = copy_model_config(cfg.tasks.rows, cfg.tasks.cols, cfg.tasks.alphabet);
    const ModelWeights w = build_copy_model(mc, cfg.tasks.alphabet);
    const TaskInstance task = gen_pointer_task(cfg.tasks.rows, cfg.tasks.cols, cfg.tasks.alphabet, cfg.tasks.seed);
    const InferenceResult out =
        run_inference(encode_image(task.image, w), embed_prompt(task.prompt, w), cfg.decode.tau, cfg.decode.steps, w,
                      SchedulePolicy{cfg.decode.policy, cfg.decode.seed}, plan_from_config(cfg));

    nlohmann::json j = {
        {"variant", variant_name(plan_from_config(cfg))},
        {"target", task.target},
        {"expected", task.expected},
        {"response_ids", out.response_ids},
        {"correct", out.response_ids.front() == task.expected},
        {"forward_passes", out.stats.forward_passes},
        {"sequence_lengths", out.stats.sequence_lengths},
        {"visual_counts", out.stats.visual_counts},
        {"total_seconds", round6(out.stats.total_seconds)},
        {"prune_seconds", round6(out.stats.prune_seconds)},
    };
    nlohmann::json keeps = nlohmann::json::array();
    for (const auto& k : out.keep_sets) keeps.push_back(k.indices);
    j["keep_sets"] = keeps;
    write_output(o, j.dump(2) + "\n");
    return 0;
}

int cmd_similarity(const Overrides& o) {
    const RunConfig cfg = resolve_config(o);
    const ReportFormat f = resolve_format(o, ReportFormat::Csv);
    const SimilarityCurve c = run_similarity(cfg);
    if (f == ReportFormat::Csv) {
        std::ostringstream ss;
        write_similarity_csv(ss, c);
        write_output(o, ss.str());
    } else {
        BenchReport r;
        r.experiment = "similarity";
        r.config = config_to_json(cfg);
        r.similarity = c;
        write_output(o, render(r, f));
    }
    return 0;
}

int cmd_ablate(const Overrides& o) {
    const RunConfig cfg = resolve_config(o);
    const ReportFormat f = resolve_format(o, ReportFormat::Csv);
    const std::vector<double> ratios = o.ratio ? std::vector<double>{*o.ratio} : std::vector<double>{0.75, 0.5, 0.25};
    BenchReport r = run_accuracy(cfg, ablation_variants(cfg, ratios));
    r.experiment = "ablation";
    write_output(o, render(r, f));
    return 0;
}

int cmd_bench(const Overrides& o) {
    const RunConfig cfg = resolve_config(o);
    const ReportFormat f = resolve_format(o, ReportFormat::Json);
    write_output(o, render(run_bench(cfg, variants_from_config(cfg)), f));
    return 0;
}

int cmd_flops(const Overrides& o) {
    const RunConfig cfg = resolve_config(o);
    const ReportFormat f = resolve_format(o, ReportFormat::Json);
    BenchReport r;
    r.experiment = "flops";
    r.config = config_to_json(cfg);
    for (const Variant& v : variants_from_config(cfg)) {
        VariantResult res;
        res.name = v.name;
        if (v.plan) {
            res.strategy = std::string(to_string(v.plan->strategy));
            res.scorer = std::string(to_string(v.plan->scorer));
            res.ratio = v.plan->ratio;
        }
        res.flops = variant_flops(cfg.model, cfg.decode.steps, cfg.bench.prompt_length, cfg.decode.tau, v.plan);
        r.variants.push_back(std::move(res));
    }
    write_output(o, render(r, f));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Response-guided visual token pruning for masked diffusion decoding"};
    app.require_subcommand(1);
    Overrides o;

    auto add_common = [&o](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "JSON run configuration");
        sub->add_option("--seed", o.seed, "Seed applied to decoding, pruning and task generation");
        sub->add_option("--r", o.ratio, "Retained visual-token ratio in (0, 1]");
        sub->add_option("--scorer", o.scorer, "masked|prompt|decoded|response|prompt+response|visual|prompt+masked");
        sub->add_option("--strategy", o.strategy, "once|random|progressive|none");
        sub->add_option("--policy", o.policy, "stochastic|confidence");
        sub->add_option("--out", o.out, "Output path (default stdout)");
        sub->add_option("--format", o.format, "json|csv");
    };

    struct Command {
        const char* name;
        const char* help;
        int (*fn)(const Overrides&);
    };
    const Command commands[] = {
        {"run", "Decode one pointer task and print ids and stats", cmd_run},
        {"similarity", "Importance-score similarity curve", cmd_similarity},
        {"ablate", "Scorer x strategy x r accuracy grid", cmd_ablate},
        {"bench", "Latency and throughput sweep", cmd_bench},
        {"flops", "Analytic FLOPs report", cmd_flops},
    };
    std::vector<std::pair<CLI::App*, int (*)(const Overrides&)>> subs;
    for (const Command& c : commands) {
        CLI::App* sub = app.add_subcommand(c.name, c.help);
        add_common(sub);
        subs.emplace_back(sub, c.fn);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitConfig;
    }

    try {
        for (auto& [sub, fn] : subs) {
            if (sub->parsed()) return fn(o);
        }
    } catch (const ConfigError& e) {
        std::cerr << "invalid configuration: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitRuntime;
}
