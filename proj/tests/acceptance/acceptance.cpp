// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "maskprune/maskprune.hpp"

namespace {

using namespace maskprune;

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
};

struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
};

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::string fmt(const char* f, double a, double b) {
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}

ModelConfig random_small_config(SeededRng& rng, std::size_t max_grid, std::size_t max_layers, std::size_t max_heads) {
    ModelConfig c;
    c.layers = 1 + rng.uniform_below(max_layers);
    c.heads = 1 + rng.uniform_below(max_heads);
    c.d_model = c.heads * (2 + 2 * rng.uniform_below(4));
    c.d_vision = 2 + rng.uniform_below(6);
    c.ffn_width = 2 + rng.uniform_below(16);
    c.vocab = 4 + rng.uniform_below(30);
    c.mask_token_id = static_cast<TokenId>(c.vocab - 1);
    c.grid_rows = 1 + rng.uniform_below(max_grid);
    c.grid_cols = 1 + rng.uniform_below(max_grid);
    c.patch_symbols = 1 + rng.uniform_below(6);
    c.max_positions = 128;
    return c;
}

PatchGrid random_image(const ModelConfig& c, SeededRng& rng) {
    PatchGrid g{c.grid_rows, c.grid_cols, std::vector<PatchSymbol>(c.num_patches())};
    for (auto& s : g.symbols) s = static_cast<PatchSymbol>(rng.uniform_below(c.patch_symbols));
    return g;
}

std::vector<TokenId> random_ids(const ModelConfig& c, std::size_t m, SeededRng& rng) {
    std::vector<TokenId> ids(m);
    for (auto& id : ids) id = static_cast<TokenId>(rng.uniform_below(c.vocab - 1));
    return ids;
}

// 1. Retained token counts for the reported grid sizes.
Outcome token_counts() {
    Outcome o;
    SeededRng rng(1);
    struct Case {
        std::size_t n;
        double r;
        std::size_t want;
    };
    for (const Case& c : {Case{3340, 0.75, 2505}, Case{3340, 0.50, 1670}, Case{3340, 0.25, 835}, Case{835, 0.75, 626}}) {
        std::vector<std::size_t> idx(c.n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        ImportanceScores s;
        s.values.resize(c.n);
        for (double& v : s.values) v = rng.uniform();
        const std::size_t got = select_top(idx, s, c.r).size();
        o.require(got == c.want, "N=" + std::to_string(c.n) + " r=" + fmt("%.2f", c.r) + " gave " +
                                     std::to_string(got) + ", want " + std::to_string(c.want));
    }
    if (o.pass) o.detail = "2505/1670/835 of 3340, 626 of 835";
    return o;
}

// 2. r = 1 pruning is the identity on decoded ids.
Outcome identity_pruning() {
    Outcome o;
    SeededRng gen(2);
    std::size_t compared = 0;
    for (int cfg_i = 0; cfg_i < 50; ++cfg_i) {
        const ModelConfig c = random_small_config(gen, 4, 3, 3);
        const ModelWeights w = init_random_model(c, gen.next_u64());
        const std::size_t m = gen.uniform_below(4);
        const std::size_t steps = 2 + gen.uniform_below(6);
        const std::size_t tau = steps + gen.uniform_below(8);
        const Matrix v = encode_image(random_image(c, gen), w);
        const Matrix p = embed_prompt(random_ids(c, m, gen), w);
        const SchedulePolicy policy =
            cfg_i % 2 ? SchedulePolicy::stochastic(gen.next_u64()) : SchedulePolicy::confidence();
        const auto base = run_inference(v, p, tau, steps, w, policy);
        for (PruneStrategy s : {PruneStrategy::OnceAfterStep1, PruneStrategy::RandomOnce, PruneStrategy::Progressive}) {
            // A stochastic schedule may commit every slot early, leaving no
            // masked rows to score; visual rows are always present.
            const ScorerKind scorer =
                policy.kind == SchedulePolicyKind::Stochastic ? ScorerKind::VisualRows : ScorerKind::MaskedRows;
            const PrunePlan plan{s, 1.0, scorer, gen.next_u64()};
            const auto pruned = run_inference(v, p, tau, steps, w, policy, plan);
            o.require(pruned.response_ids == base.response_ids,
                      "config " + std::to_string(cfg_i) + " strategy " + std::string(to_string(s)));
            ++compared;
        }
    }
    if (o.pass) o.detail = std::to_string(compared) + " runs over 50 configs bitwise equal";
    return o;
}

// 3. Schedule marginals.
Outcome schedule_marginal() {
    Outcome o;
    ModelConfig c;
    c.layers = 1;
    c.heads = 1;
    c.d_model = 4;
    c.d_vision = 2;
    c.ffn_width = 4;
    c.vocab = 8;
    c.mask_token_id = 7;
    c.grid_rows = 1;
    c.grid_cols = 1;
    c.patch_symbols = 2;
    c.max_positions = 128;
    const ModelWeights w = init_random_model(c, 3);
    const Matrix v = encode_image(PatchGrid{1, 1, {0}}, w);
    const std::size_t tau = 64;
    const std::size_t steps = 16;
    const int trials = 10000;

    std::vector<double> masked(steps, 0.0);
    SeededRng seeds(3);
    for (int t = 0; t < trials; ++t) {
        SeededRng rng(seeds.next_u64());
        SequenceState s = init_state(v, Matrix(0, c.d_model), tau, steps, c.mask_token_id);
        for (std::size_t k = 0; k < steps; ++k) {
            s = step(std::move(s), w, SchedulePolicy::stochastic(0), rng).state;
            masked[k] += static_cast<double>(s.masked.size()) / static_cast<double>(tau);
        }
    }
    double worst = 0.0;
    for (std::size_t k = 0; k < steps; ++k) {
        const double expected = 1.0 - static_cast<double>(k + 1) / static_cast<double>(steps);
        const double err = std::abs(masked[k] / trials - expected);
        worst = std::max(worst, err);
        o.require(err <= 0.02, "stochastic k=" + std::to_string(k + 1) + fmt(" off by %.4f", err));
    }

    // Confidence policy against floating round-half-up.
    std::size_t checked = 0;
    for (std::size_t kk : {4, 8, 16, 13}) {
        for (std::size_t t : {1, 7, 16, 33, 64}) {
            SeededRng rng(0);
            SequenceState s = init_state(v, Matrix(0, c.d_model), t, kk, c.mask_token_id);
            for (std::size_t k = 1; k <= kk; ++k) {
                const auto r = step(std::move(s), w, SchedulePolicy::confidence(), rng);
                s = r.state;
                const double hi = std::floor(static_cast<double>(t * k) / static_cast<double>(kk) + 0.5);
                const double lo = std::floor(static_cast<double>(t * (k - 1)) / static_cast<double>(kk) + 0.5);
                o.require(r.outcome.newly_decoded.size() == static_cast<std::size_t>(hi - lo),
                          "confidence tau=" + std::to_string(t) + " K=" + std::to_string(kk) + " k=" +
                              std::to_string(k));
                ++checked;
            }
            o.require(s.masked.empty(), "confidence run left masked slots");
        }
    }
    if (o.pass) o.detail = fmt("max |err| %.4f over 16 steps; %.0f confidence steps exact", worst, checked);
    return o;
}

// 4. Engine scores vs a quadruple loop over full captures.
Outcome scoring_oracle() {
    Outcome o;
    SeededRng gen(4);
    int instances = 0;
    int empty_sets = 0;
    double worst = 0.0;
    while (instances < 100) {
        ModelConfig c = random_small_config(gen, 3, 3, 3);
        while (c.num_patches() > 8) c = random_small_config(gen, 3, 3, 3);
        const ModelWeights w = init_random_model(c, gen.next_u64());
        const std::size_t m = gen.uniform_below(5);
        const std::size_t tau = 1 + gen.uniform_below(4);
        const std::size_t steps = 1 + gen.uniform_below(6);
        const Matrix v = encode_image(random_image(c, gen), w);
        const Matrix p = embed_prompt(random_ids(c, m, gen), w);
        const std::uint64_t seed = gen.next_u64();

        SeededRng r1(seed), r2(seed);
        const SequenceState s0 = init_state(v, p, tau, steps, c.mask_token_id);
        const StepResult mean_run = step(s0, w, SchedulePolicy::stochastic(seed), r1, CaptureMode::Mean);
        const StepResult full_run = step(s0, w, SchedulePolicy::stochastic(seed), r2, CaptureMode::Full);
        if (mean_run.state.masked.empty()) {
            bool threw = false;
            try {
                (void)score_visual_tokens(mean_run.state, *mean_run.outcome.mean_attention, ScorerKind::MaskedRows, 1);
            } catch (const EmptyGuidanceSet&) {
                threw = true;
            }
            o.require(threw, "empty masked set did not raise");
            ++empty_sets;
            continue;
        }
        const ImportanceScores got =
            score_visual_tokens(mean_run.state, *mean_run.outcome.mean_attention, ScorerKind::MaskedRows, 1);

        const AttentionCapture& cap = *full_run.outcome.attention;
        const std::size_t nv = c.num_patches();
        const auto& masked = full_run.state.masked;
        for (std::size_t col = 0; col < nv; ++col) {
            double total = 0.0;
            for (std::size_t l = 0; l < c.layers; ++l) {
                for (std::size_t h = 0; h < c.heads; ++h) {
                    for (std::size_t slot : masked) {
                        total += cap.maps[l * c.heads + h](nv + m + slot, col);
                    }
                }
            }
            const double oracle = total / static_cast<double>(c.layers * c.heads * masked.size());
            worst = std::max(worst, std::abs(oracle - got.values[col]));
        }
        ++instances;
    }
    o.require(worst <= 1e-9, fmt("max deviation %.3g", worst));
    if (o.pass) {
        o.detail = fmt("100 instances, max |diff| %.2e; %.0f empty guidance sets rejected", worst, empty_sets);
    }
    return o;
}

RunConfig pointer_config() {
    RunConfig cfg;
    cfg.decode.steps = 8;
    cfg.decode.tau = 16;
    cfg.decode.policy = SchedulePolicyKind::DeterministicConfidence;
    cfg.tasks.rows = 8;
    cfg.tasks.cols = 8;
    cfg.tasks.alphabet = 8;
    cfg.tasks.count = 200;
    cfg.tasks.seed = 5;
    cfg.prune.seed = 5;
    return cfg;
}

// 5. Copy-model retention.
Outcome copy_retention() {
    Outcome o;
    const RunConfig cfg = pointer_config();
    const std::vector<Variant> variants{
        make_variant(PrunePlan{PruneStrategy::OnceAfterStep1, 0.25, ScorerKind::MaskedRows, 5}),
        make_variant(PrunePlan{PruneStrategy::RandomOnce, 0.25, ScorerKind::MaskedRows, 5}),
    };
    const BenchReport r = run_accuracy(cfg, variants);
    const double masked = *r.variants[0].accuracy;
    const double random = *r.variants[1].accuracy;
    const double half_width = 2.576 * std::sqrt(0.25 * 0.75 / 200.0);
    o.require(masked == 1.0, fmt("masked accuracy %.3f", masked));
    o.require(std::abs(random - 0.25) <= half_width, fmt("random accuracy %.3f outside 0.25 +- %.3f", random, half_width));
    o.detail = fmt("masked %.3f, random %.3f", masked, random) + fmt(" (CI 0.25 +- %.3f)", half_width);
    return o;
}

// 6. Similarity curve on the copy model.
Outcome similarity() {
    Outcome o;
    RunConfig cfg = pointer_config();
    cfg.tasks.count = 50;
    const SimilarityCurve c = run_similarity(cfg);
    o.require(c.steps.size() == 6, "expected Sim_2..Sim_7");
    o.require(c.min() >= 0.99, fmt("min Sim_k %.6f", c.min()));
    const std::vector<double> u{1, 0}, v{1, 1};
    const double cs = cosine(u, v);
    o.require(std::abs(cs - std::sqrt(2.0) / 2.0) <= 1e-9, fmt("cosine %.12f", cs));
    o.detail = fmt("min Sim_k %.6f over %.0f samples", c.min(), static_cast<double>(c.sample_count));
    return o;
}

// 7. FLOPs formula.
Outcome flops() {
    Outcome o;
    o.require(flops_baseline(2, 4, 16, 8, 16) == 98304, "baseline example");
    const FlopsReport r = flops_pruned(2, 4, 16, 8, 8, 16);
    o.require(r.pruned == 55296 && r.ratio == 0.5625, "pruned example");
    SeededRng rng(7);
    for (int i = 0; i < 1000; ++i) {
        const FlopCount l = 1 + rng.uniform_below(16);
        const FlopCount k = 1 + rng.uniform_below(32);
        const FlopCount n = 1 + rng.uniform_below(4096);
        const FlopCount d = 1 + rng.uniform_below(512);
        const FlopCount mu = 1 + rng.uniform_below(2048);
        const FlopCount a = rng.uniform_below(n + 1);
        const FlopCount b = a + rng.uniform_below(n - a + 1);
        if (flops_baseline(l, k, n, d, mu) != k * flops_baseline(l, 1, n, d, mu)) {
            o.require(false, "step additivity draw " + std::to_string(i));
        }
        if (flops_pruned(l, k, n, a, d, mu).pruned > flops_pruned(l, k, n, b, d, mu).pruned) {
            o.require(false, "monotonicity draw " + std::to_string(i));
        }
    }
    if (o.pass) o.detail = "98304, ratio 0.5625, 1000 property draws";
    return o;
}

RunConfig bench_config() {
    RunConfig cfg;  // N = 32x32, d = 128, L = 4, H = 4, mu = 512
    cfg.decode.steps = 16;
    cfg.decode.tau = 32;
    cfg.bench.prompt_length = 16;
    cfg.bench.warmup = 1;
    cfg.bench.reps = 1;
    return cfg;
}

// 8. Wall-clock throughput gain.
Outcome speedup() {
    Outcome o;
    const RunConfig cfg = bench_config();
    const BenchReport r = run_bench(cfg, {make_variant(std::nullopt),
                                          make_variant(PrunePlan{PruneStrategy::OnceAfterStep1, 0.25})});
    const double gain = r.variants[1].throughput_tok_per_s / r.variants[0].throughput_tok_per_s;
    o.require(gain >= 1.5, fmt("throughput gain %.2fx", gain));
    o.detail = fmt("throughput %.2f -> %.2f tok/s", r.variants[0].throughput_tok_per_s,
                   r.variants[1].throughput_tok_per_s) +
               fmt(" (%.2fx, analytic FLOPs ratio %.3f)", gain, r.variants[1].flops.ratio);
    return o;
}

// 9. Once vs progressive latency.
Outcome once_vs_progressive() {
    Outcome o;
    RunConfig cfg = bench_config();
    cfg.model.grid_rows = 16;
    cfg.model.grid_cols = 16;
    cfg.bench.reps = 3;
    const BenchReport r =
        run_bench(cfg, {make_variant(PrunePlan{PruneStrategy::OnceAfterStep1, 0.5}),
                        make_variant(PrunePlan{PruneStrategy::Progressive, 0.5})});
    const double once = r.variants[0].latency_s_per_sample;
    const double pp = r.variants[1].latency_s_per_sample;
    o.require(once <= pp, fmt("once %.4f s > progressive %.4f s", once, pp));

    const std::size_t n = cfg.model.num_patches();
    const auto lo = step_lengths(PruneStrategy::OnceAfterStep1, n, 16, 32, 16, 0.5);
    const auto lp = step_lengths(PruneStrategy::Progressive, n, 16, 32, 16, 0.5);
    const auto so = std::accumulate(lo.begin(), lo.end(), std::size_t{0});
    const auto sp = std::accumulate(lp.begin(), lp.end(), std::size_t{0});
    // Independent length sums: once is n + (K-1) * N_r; progressive removes
    // its share step by step.
    const std::size_t nr = n / 2;
    std::size_t oracle_pp = 0;
    std::size_t current = n;
    const std::size_t removals = n - nr;
    for (std::size_t k = 1; k <= 16; ++k) {
        oracle_pp += current + 48;
        if (k < 16) current -= removals / 15 + (k - 1 < removals % 15 ? 1 : 0);
    }
    o.require(so == n + 48 + 15 * (nr + 48), "once length sum");
    o.require(sp == oracle_pp, "progressive length sum");
    o.require(so <= sp, "analytic ordering");
    o.detail = fmt("latency once %.4f s, progressive %.4f s", once, pp) +
               fmt("; length sums %.0f vs %.0f", static_cast<double>(so), static_cast<double>(sp));
    return o;
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "token-count reproduction", 1.0, token_counts},
        {2, "identity pruning at r=1", 10.0, identity_pruning},
        {3, "schedule marginals", 60.0, schedule_marginal},
        {4, "scoring brute-force oracle", 30.0, scoring_oracle},
        {5, "copy-model retention", 120.0, copy_retention},
        {6, "similarity harness", 30.0, similarity},
        {7, "FLOPs oracle", 10.0, flops},
        {8, "wall-clock speedup", 300.0, speedup},
        {9, "once vs progressive efficiency", 120.0, once_vs_progressive},
    };
    int failures = 0;
    for (const Criterion& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (secs > c.budget_s) {
            o.pass = false;
            o.detail += fmt("; took %.1f s, budget %.0f s", secs, c.budget_s);
        }
        failures += o.pass ? 0 : 1;
        std::printf("%s %d. %s: %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
