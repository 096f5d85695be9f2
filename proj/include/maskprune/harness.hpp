#pragma once

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"
#include "maskprune/analysis.hpp"
#include "maskprune/decoder.hpp"
#include "maskprune/error.hpp"
#include "maskprune/inference.hpp"
#include "maskprune/model.hpp"
#include "maskprune/pruning.hpp"

namespace maskprune {

// ---------------------------------------------------------------------------
// Pointer tasks
// ---------------------------------------------------------------------------

/// A synthetic "what symbol is at patch t?" sample.
struct TaskInstance {
    PatchGrid image;
    std::vector<TokenId> prompt;  // a single index token naming the target patch
    TokenId expected = 0;
    std::size_t target = 0;
    std::uint64_t seed = 0;
};

inline TaskInstance gen_pointer_task(std::size_t rows, std::size_t cols, std::size_t alphabet, std::uint64_t seed) {
    if (alphabet == 0) {
        throw RangeError("gen_pointer_task: empty symbol alphabet");
    }
    if (rows < 1 || cols < 1) {
        throw RangeError("gen_pointer_task: grid must be at least 1x1");
    }
    SeededRng rng(seed);
    TaskInstance t;
    t.seed = seed;
    t.image.rows = rows;
    t.image.cols = cols;
    t.image.symbols.resize(rows * cols);
    for (auto& s : t.image.symbols) {
        s = static_cast<PatchSymbol>(rng.uniform_below(alphabet));
    }
    t.target = static_cast<std::size_t>(rng.uniform_below(rows * cols));
    const PointerVocab vocab{alphabet, rows * cols};
    t.prompt = {vocab.index_token(t.target)};
    t.expected = vocab.symbol_token(t.image.symbols[t.target]);
    return t;
}

/// Independent per-item seed derived from a base seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    SeededRng rng(base ^ (index * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL));
    return rng.next_u64();
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct DecodeSettings {
    std::size_t steps = 16;
    std::size_t tau = 32;
    SchedulePolicyKind policy = SchedulePolicyKind::DeterministicConfidence;
    std::uint64_t seed = 0;
};

struct PruneSettings {
    std::optional<PruneStrategy> strategy = PruneStrategy::OnceAfterStep1;  // nullopt = no pruning
    ScorerKind scorer = ScorerKind::MaskedRows;
    double ratio = 0.25;
    std::uint64_t seed = 0;
};

struct TaskSettings {
    std::size_t count = 200;
    std::size_t rows = 8;
    std::size_t cols = 8;
    std::size_t alphabet = 8;
    std::uint64_t seed = 1;
};

struct BenchSettings {
    std::size_t warmup = 3;
    std::size_t reps = 3;
    std::size_t prompt_length = 16;
};

struct RunConfig {
    ModelConfig model = default_bench_model();
    DecodeSettings decode;
    PruneSettings prune;
    TaskSettings tasks;
    BenchSettings bench;

    static ModelConfig default_bench_model() {
        ModelConfig m;
        m.layers = 4;
        m.heads = 4;
        m.d_model = 128;
        m.d_vision = 64;
        m.ffn_width = 512;
        m.vocab = 512;
        m.mask_token_id = 511;
        m.grid_rows = 32;
        m.grid_cols = 32;
        m.patch_symbols = 16;
        m.max_positions = 4096;
        return m;
    }

    void validate() const {
        model.validate();
        if (decode.steps < 1 || decode.tau < 1) {
            throw ConfigError("decode: K and tau must be >= 1");
        }
        if (!(prune.ratio > 0.0 && prune.ratio <= 1.0)) {
            throw ConfigError("prune: r must lie in (0, 1]");
        }
        if (prune.strategy == PruneStrategy::Progressive && decode.steps < 2 && prune.ratio < 1.0) {
            throw ConfigError("prune: progressive pruning needs K >= 2");
        }
        if (tasks.count < 1 || tasks.rows < 1 || tasks.cols < 1 || tasks.alphabet < 1) {
            throw ConfigError("tasks: count, grid and alphabet must be >= 1");
        }
        if (bench.warmup < 1 || bench.reps < 1) {
            throw ConfigError("bench: warmup and reps must be >= 1");
        }
        if (model.num_patches() + bench.prompt_length + decode.tau > model.max_positions) {
            throw ConfigError("bench: sequence longer than the positional table");
        }
    }
};

inline std::string_view to_string(SchedulePolicyKind p) {
    return p == SchedulePolicyKind::Stochastic ? "stochastic" : "confidence";
}

inline std::optional<SchedulePolicyKind> parse_policy(std::string_view name) {
    if (name == "stochastic") return SchedulePolicyKind::Stochastic;
    if (name == "confidence") return SchedulePolicyKind::DeterministicConfidence;
    return std::nullopt;
}

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) {
        throw ConfigError(where + ": expected a JSON object");
    }
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.contains(key)) {
            throw ConfigError(where + ": unknown key '" + key + "'");
        }
    }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
    if (!obj.contains(key)) {
        return;
    }
    if constexpr (std::is_unsigned_v<T>) {
        if (!obj.at(key).is_number_unsigned()) {
            throw ConfigError(where + "." + key + ": expected a non-negative integer");
        }
    } else if constexpr (std::is_floating_point_v<T>) {
        if (!obj.at(key).is_number()) {
            throw ConfigError(where + "." + key + ": expected a number");
        }
    }
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

inline void read_grid(const json& obj, std::size_t& rows, std::size_t& cols, const std::string& where) {
    if (!obj.contains("grid")) {
        return;
    }
    const json& g = obj.at("grid");
    if (!g.is_array() || g.size() != 2 || !g[0].is_number_unsigned() || !g[1].is_number_unsigned()) {
        throw ConfigError(where + ".grid: expected [rows, cols]");
    }
    rows = g[0].get<std::size_t>();
    cols = g[1].get<std::size_t>();
}

}  // namespace detail

/// Builds a RunConfig from the JSON schema
/// { model{L,H,d,d_v,mu,vocab,grid,patch_symbols}, decode{K,tau,policy,seed},
///   prune{strategy,scorer,r,seed}, tasks{count,grid,alphabet,seed}, bench{warmup,reps,prompt_len} }.
/// Missing keys keep their defaults.
inline RunConfig config_from_json(const nlohmann::json& j) {
    using detail::read;
    RunConfig cfg;
    detail::reject_unknown(j, {"model", "decode", "prune", "tasks", "bench"}, "config");
    if (j.contains("model")) {
        const auto& m = j.at("model");
        detail::reject_unknown(m, {"L", "H", "d", "d_v", "mu", "vocab", "grid", "patch_symbols"}, "model");
        read(m, "L", cfg.model.layers, "model");
        read(m, "H", cfg.model.heads, "model");
        read(m, "d", cfg.model.d_model, "model");
        read(m, "d_v", cfg.model.d_vision, "model");
        read(m, "mu", cfg.model.ffn_width, "model");
        read(m, "vocab", cfg.model.vocab, "model");
        read(m, "patch_symbols", cfg.model.patch_symbols, "model");
        detail::read_grid(m, cfg.model.grid_rows, cfg.model.grid_cols, "model");
        if (cfg.model.vocab < 1) {
            throw ConfigError("model.vocab must be >= 1");
        }
        cfg.model.mask_token_id = static_cast<TokenId>(cfg.model.vocab - 1);
    }
    if (j.contains("decode")) {
        const auto& d = j.at("decode");
        detail::reject_unknown(d, {"K", "tau", "policy", "seed"}, "decode");
        read(d, "K", cfg.decode.steps, "decode");
        read(d, "tau", cfg.decode.tau, "decode");
        read(d, "seed", cfg.decode.seed, "decode");
        if (d.contains("policy")) {
            std::string name;
            read(d, "policy", name, "decode");
            auto p = parse_policy(name);
            if (!p) throw ConfigError("decode.policy: unknown policy '" + name + "'");
            cfg.decode.policy = *p;
        }
    }
    if (j.contains("prune")) {
        const auto& p = j.at("prune");
        detail::reject_unknown(p, {"strategy", "scorer", "r", "seed"}, "prune");
        read(p, "r", cfg.prune.ratio, "prune");
        read(p, "seed", cfg.prune.seed, "prune");
        if (p.contains("strategy")) {
            std::string name;
            read(p, "strategy", name, "prune");
            if (name == "none") {
                cfg.prune.strategy.reset();
            } else {
                auto s = parse_strategy(name);
                if (!s) throw ConfigError("prune.strategy: unknown strategy '" + name + "'");
                cfg.prune.strategy = *s;
            }
        }
        if (p.contains("scorer")) {
            std::string name;
            read(p, "scorer", name, "prune");
            auto s = parse_scorer(name);
            if (!s) throw ConfigError("prune.scorer: unknown scorer '" + name + "'");
            cfg.prune.scorer = *s;
        }
    }
    if (j.contains("tasks")) {
        const auto& t = j.at("tasks");
        detail::reject_unknown(t, {"count", "grid", "alphabet", "seed"}, "tasks");
        read(t, "count", cfg.tasks.count, "tasks");
        read(t, "alphabet", cfg.tasks.alphabet, "tasks");
        read(t, "seed", cfg.tasks.seed, "tasks");
        detail::read_grid(t, cfg.tasks.rows, cfg.tasks.cols, "tasks");
    }
    if (j.contains("bench")) {
        const auto& b = j.at("bench");
        detail::reject_unknown(b, {"warmup", "reps", "prompt_len"}, "bench");
        read(b, "warmup", cfg.bench.warmup, "bench");
        read(b, "reps", cfg.bench.reps, "bench");
        read(b, "prompt_len", cfg.bench.prompt_length, "bench");
    }
    cfg.validate();
    return cfg;
}

inline nlohmann::json config_to_json(const RunConfig& cfg) {
    return {
        {"model",
         {{"L", cfg.model.layers},
          {"H", cfg.model.heads},
          {"d", cfg.model.d_model},
          {"d_v", cfg.model.d_vision},
          {"mu", cfg.model.ffn_width},
          {"vocab", cfg.model.vocab},
          {"grid", {cfg.model.grid_rows, cfg.model.grid_cols}},
          {"patch_symbols", cfg.model.patch_symbols}}},
        {"decode",
         {{"K", cfg.decode.steps},
          {"tau", cfg.decode.tau},
          {"policy", std::string(to_string(cfg.decode.policy))},
          {"seed", cfg.decode.seed}}},
        {"prune",
         {{"strategy", cfg.prune.strategy ? std::string(to_string(*cfg.prune.strategy)) : std::string("none")},
          {"scorer", std::string(to_string(cfg.prune.scorer))},
          {"r", cfg.prune.ratio},
          {"seed", cfg.prune.seed}}},
        {"tasks",
         {{"count", cfg.tasks.count},
          {"grid", {cfg.tasks.rows, cfg.tasks.cols}},
          {"alphabet", cfg.tasks.alphabet},
          {"seed", cfg.tasks.seed}}},
        {"bench", {{"warmup", cfg.bench.warmup}, {"reps", cfg.bench.reps}, {"prompt_len", cfg.bench.prompt_length}}},
    };
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file '" + path + "'");
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file '" + path + "': " + e.what());
    }
    return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

/// One arm of an experiment: baseline (no plan) or a pruning plan.
struct Variant {
    std::string name;
    std::optional<PrunePlan> plan;
};

inline std::string variant_name(const std::optional<PrunePlan>& plan) {
    if (!plan) {
        return "baseline";
    }
    char ratio[32];
    std::snprintf(ratio, sizeof ratio, "%.2f", plan->ratio);
    std::string name(to_string(plan->strategy));
    if (plan->strategy != PruneStrategy::RandomOnce) {
        name += "/" + std::string(to_string(plan->scorer));
    }
    return name + "/r=" + ratio;
}

inline Variant make_variant(std::optional<PrunePlan> plan) {
    std::string name = variant_name(plan);
    return {std::move(name), std::move(plan)};
}

inline std::optional<PrunePlan> plan_from_config(const RunConfig& cfg) {
    if (!cfg.prune.strategy) {
        return std::nullopt;
    }
    PrunePlan p;
    p.strategy = *cfg.prune.strategy;
    p.ratio = cfg.prune.ratio;
    p.scorer = cfg.prune.scorer;
    p.rng_seed = cfg.prune.seed;
    return p;
}

/// Baseline plus the configured plan, if any.
inline std::vector<Variant> variants_from_config(const RunConfig& cfg) {
    std::vector<Variant> out{make_variant(std::nullopt)};
    if (auto p = plan_from_config(cfg)) {
        out.push_back(make_variant(std::move(p)));
    }
    return out;
}

/// Baseline, then for each ratio: OnceAfterStep1 with every scorer, RandomOnce,
/// and Progressive with the configured scorer.
inline std::vector<Variant> ablation_variants(const RunConfig& cfg, const std::vector<double>& ratios) {
    std::vector<Variant> out{make_variant(std::nullopt)};
    for (double r : ratios) {
        for (ScorerKind s : kAllScorers) {
            out.push_back(make_variant(PrunePlan{PruneStrategy::OnceAfterStep1, r, s, cfg.prune.seed, {}}));
        }
        out.push_back(make_variant(PrunePlan{PruneStrategy::RandomOnce, r, cfg.prune.scorer, cfg.prune.seed, {}}));
        out.push_back(make_variant(PrunePlan{PruneStrategy::Progressive, r, cfg.prune.scorer, cfg.prune.seed, {}}));
    }
    return out;
}

struct VariantResult {
    std::string name;
    std::string strategy = "none";
    std::string scorer;
    double ratio = 1.0;
    std::size_t samples = 0;
    std::optional<double> accuracy;
    double latency_s_per_sample = 0.0;
    double throughput_tok_per_s = 0.0;
    double mean_visual_tokens = 0.0;
    FlopsReport flops;

    friend bool operator==(const VariantResult&, const VariantResult&) = default;
};

struct BenchReport {
    std::string experiment;
    nlohmann::json config;
    std::vector<VariantResult> variants;
    std::optional<SimilarityCurve> similarity;

    const VariantResult* find(const std::string& name) const {
        for (const auto& v : variants) {
            if (v.name == name) return &v;
        }
        return nullptr;
    }

    friend bool operator==(const BenchReport&, const BenchReport&) = default;
};

/// Analytic FLOPs for one variant on a sequence of N visual, m prompt and tau
/// response tokens.
inline FlopsReport variant_flops(const ModelConfig& model, std::size_t steps, std::size_t m, std::size_t tau,
                                 const std::optional<PrunePlan>& plan) {
    const std::size_t n_vis = model.num_patches();
    const std::size_t n = n_vis + m + tau;
    std::optional<PruneStrategy> strategy;
    double r = 1.0;
    if (plan) {
        strategy = plan->strategy;
        r = plan->ratio;
    }
    const auto lengths = step_lengths(strategy, n_vis, m, tau, steps, r);
    FlopsReport f;
    f.layers = model.layers;
    f.steps = steps;
    f.n = n;
    f.n_r = lengths.back();
    f.d = model.d_model;
    f.mu = model.ffn_width;
    f.baseline = flops_baseline(model.layers, steps, n, model.d_model, model.ffn_width);
    f.pruned = flops_for_lengths(model.layers, lengths, model.d_model, model.ffn_width);
    f.ratio = f.baseline == 0 ? 1.0 : static_cast<double>(f.pruned) / static_cast<double>(f.baseline);
    return f;
}

namespace detail {

inline VariantResult describe(const Variant& v) {
    VariantResult r;
    r.name = v.name;
    if (v.plan) {
        r.strategy = std::string(to_string(v.plan->strategy));
        r.scorer = v.plan->strategy == PruneStrategy::RandomOnce ? "" : std::string(to_string(v.plan->scorer));
        r.ratio = v.plan->ratio;
    }
    return r;
}

inline std::optional<PrunePlan> plan_for_sample(const std::optional<PrunePlan>& plan, std::size_t sample) {
    if (!plan) return plan;
    PrunePlan p = *plan;
    p.rng_seed = derive_seed(plan->rng_seed, sample);
    return p;
}

inline SchedulePolicy policy_for_sample(const DecodeSettings& d, std::size_t sample) {
    return {d.policy, derive_seed(d.seed, sample)};
}

}  // namespace detail

/// Pointer-task accuracy of every variant on the copy model. A sample is
/// correct when response slot 0 equals the planted symbol.
inline BenchReport run_accuracy(const RunConfig& cfg, const std::vector<Variant>& variants) {
    cfg.validate();
    const ModelConfig mc = copy_model_config(cfg.tasks.rows, cfg.tasks.cols, cfg.tasks.alphabet);
    const ModelWeights w = build_copy_model(mc, cfg.tasks.alphabet);

    std::vector<TaskInstance> tasks;
    std::vector<Matrix> visual;
    std::vector<Matrix> prompts;
    for (std::size_t i = 0; i < cfg.tasks.count; ++i) {
        tasks.push_back(gen_pointer_task(cfg.tasks.rows, cfg.tasks.cols, cfg.tasks.alphabet,
                                         derive_seed(cfg.tasks.seed, i)));
        visual.push_back(encode_image(tasks.back().image, w));
        prompts.push_back(embed_prompt(tasks.back().prompt, w));
    }

    BenchReport report;
    report.experiment = "accuracy";
    report.config = config_to_json(cfg);
    for (const Variant& v : variants) {
        VariantResult r = detail::describe(v);
        std::size_t correct = 0;
        double seconds = 0.0;
        double visual_tokens = 0.0;
        for (std::size_t i = 0; i < tasks.size(); ++i) {
            const InferenceResult out =
                run_inference(visual[i], prompts[i], cfg.decode.tau, cfg.decode.steps, w,
                              detail::policy_for_sample(cfg.decode, i), detail::plan_for_sample(v.plan, i));
            correct += out.response_ids.front() == tasks[i].expected ? 1 : 0;
            seconds += out.stats.total_seconds;
            visual_tokens += static_cast<double>(out.final_state.visual_count());
        }
        const double count = static_cast<double>(tasks.size());
        r.samples = tasks.size();
        r.accuracy = static_cast<double>(correct) / count;
        r.latency_s_per_sample = seconds / count;
        r.throughput_tok_per_s = seconds > 0.0 ? static_cast<double>(cfg.decode.tau) * count / seconds : 0.0;
        r.mean_visual_tokens = visual_tokens / count;
        r.flops = variant_flops(mc, cfg.decode.steps, tasks.front().prompt.size(), cfg.decode.tau, v.plan);
        report.variants.push_back(std::move(r));
    }
    return report;
}

/// Averaged Sim_k curve of masked-row scores over no-prune copy-model runs.
inline SimilarityCurve run_similarity(const RunConfig& cfg) {
    cfg.validate();
    if (cfg.decode.steps < 3) {
        throw ConfigError("similarity: K must be >= 3");
    }
    const ModelConfig mc = copy_model_config(cfg.tasks.rows, cfg.tasks.cols, cfg.tasks.alphabet);
    const ModelWeights w = build_copy_model(mc, cfg.tasks.alphabet);
    InferenceOptions opts;
    opts.score_trace = ScorerKind::MaskedRows;

    std::vector<std::vector<std::vector<double>>> samples;
    for (std::size_t i = 0; i < cfg.tasks.count; ++i) {
        const TaskInstance t =
            gen_pointer_task(cfg.tasks.rows, cfg.tasks.cols, cfg.tasks.alphabet, derive_seed(cfg.tasks.seed, i));
        const InferenceResult out =
            run_inference(encode_image(t.image, w), embed_prompt(t.prompt, w), cfg.decode.tau, cfg.decode.steps, w,
                          detail::policy_for_sample(cfg.decode, i), std::nullopt, opts);
        std::vector<std::vector<double>> trace;
        for (const auto& s : out.score_trace) {
            trace.push_back(s.values);
        }
        if (trace.size() >= 2) {
            samples.push_back(std::move(trace));
        }
    }
    if (samples.empty()) {
        throw RangeError("similarity: no run produced two or more score vectors (raise tau)");
    }
    return similarity_curve(std::span<const std::vector<std::vector<double>>>(samples));
}

/// Total timed seconds below this are rejected as unmeasurable.
inline constexpr double kMinTimedSeconds = 1e-3;

/// Wall-clock latency and throughput of every variant on one synthetic input
/// to a random model of cfg.model's dimensions. Timing covers the K forward
/// passes plus pruning, after cfg.bench.warmup discarded runs.
inline BenchReport run_bench(const RunConfig& cfg, const std::vector<Variant>& variants) {
    cfg.validate();
    const ModelWeights w = init_random_model(cfg.model, cfg.decode.seed);

    SeededRng rng(cfg.tasks.seed);
    PatchGrid image{cfg.model.grid_rows, cfg.model.grid_cols, {}};
    image.symbols.resize(image.size());
    for (auto& s : image.symbols) {
        s = static_cast<PatchSymbol>(rng.uniform_below(cfg.model.patch_symbols));
    }
    std::vector<TokenId> prompt_ids(cfg.bench.prompt_length);
    for (auto& id : prompt_ids) {
        do {
            id = static_cast<TokenId>(rng.uniform_below(cfg.model.vocab));
        } while (id == cfg.model.mask_token_id && cfg.model.vocab > 1);
    }
    const Matrix visual = encode_image(image, w);
    const Matrix prompt = embed_prompt(prompt_ids, w);
    const SchedulePolicy policy{cfg.decode.policy, cfg.decode.seed};

    BenchReport report;
    report.experiment = "bench";
    report.config = config_to_json(cfg);
    for (const Variant& v : variants) {
        VariantResult r = detail::describe(v);
        for (std::size_t i = 0; i < cfg.bench.warmup; ++i) {
            (void)run_inference(visual, prompt, cfg.decode.tau, cfg.decode.steps, w, policy, v.plan);
        }
        double seconds = 0.0;
        double visual_tokens = 0.0;
        for (std::size_t i = 0; i < cfg.bench.reps; ++i) {
            const InferenceResult out = run_inference(visual, prompt, cfg.decode.tau, cfg.decode.steps, w, policy, v.plan);
            seconds += out.stats.total_seconds;
            visual_tokens += static_cast<double>(out.final_state.visual_count());
        }
        if (seconds < kMinTimedSeconds) {
            throw TimerResolutionError("bench: variant '" + v.name + "' ran for only " + std::to_string(seconds) +
                                       " s; raise reps or model size");
        }
        const double reps = static_cast<double>(cfg.bench.reps);
        r.samples = cfg.bench.reps;
        r.latency_s_per_sample = seconds / reps;
        r.throughput_tok_per_s = static_cast<double>(cfg.decode.tau) * reps / seconds;
        r.mean_visual_tokens = visual_tokens / reps;
        r.flops = variant_flops(cfg.model, cfg.decode.steps, cfg.bench.prompt_length, cfg.decode.tau, v.plan);
        report.variants.push_back(std::move(r));
    }
    return report;
}

}  // namespace maskprune
