#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <vector>

#include "maskprune/decoder.hpp"
#include "maskprune/error.hpp"
#include "maskprune/model.hpp"
#include "maskprune/pruning.hpp"

namespace maskprune {

struct InferenceOptions {
    /// Full keeps every layer/head map of every step in the trace; Mean keeps
    /// the averaged map. None keeps only what pruning needs, then drops it.
    CaptureMode trace_capture = CaptureMode::None;
    /// No-prune instrumentation: record S_k with this scorer after every step
    /// k <= K-1 whose guidance set is nonempty.
    std::optional<ScorerKind> score_trace;
};

struct RunStats {
    std::size_t forward_passes = 0;
    std::vector<std::size_t> sequence_lengths;  // per step
    std::vector<std::size_t> visual_counts;     // per step, at forward time
    std::vector<double> step_seconds;
    double prune_seconds = 0.0;
    double total_seconds = 0.0;
};

struct InferenceResult {
    std::vector<TokenId> response_ids;
    std::vector<StepOutcome> trace;
    std::vector<ImportanceScores> score_trace;
    std::vector<KeepSet> keep_sets;  // one per pruning event
    RunStats stats;
    SequenceState final_state;
};

namespace detail {

inline bool prunes_after(const PrunePlan& plan, std::size_t k, const std::vector<std::size_t>& progressive) {
    switch (plan.strategy) {
        case PruneStrategy::OnceAfterStep1:
        case PruneStrategy::RandomOnce: return k == 1;
        case PruneStrategy::Progressive: return k - 1 < progressive.size() && progressive[k - 1] > 0;
    }
    return false;
}

}  // namespace detail

/// Runs K denoising steps over Concat(V, T, R_k). With a plan, visual tokens
/// are pruned after the steps the strategy names; later steps run at the
/// shorter length. Masked set is empty afterwards.
inline InferenceResult run_inference(const Matrix& visual, const Matrix& prompt, std::size_t tau,
                                     std::size_t total_steps, const ModelWeights& w, const SchedulePolicy& policy,
                                     const std::optional<PrunePlan>& plan = std::nullopt,
                                     const InferenceOptions& options = {}) {
    const auto started = std::chrono::steady_clock::now();
    SequenceState state = init_state(visual, prompt, tau, total_steps, w.config.mask_token_id);

    std::vector<std::size_t> progressive;
    SeededRng prune_rng(0);
    if (plan) {
        plan->validate();
        if (plan->strategy == PruneStrategy::Progressive) {
            progressive = plan->per_step_counts.empty()
                              ? plan_progressive(state.visual_count(), plan->ratio, total_steps)
                              : plan->per_step_counts;
            const std::size_t expected =
                state.visual_count() - retained_count(state.visual_count(), plan->ratio);
            std::size_t sum = 0;
            for (std::size_t c : progressive) sum += c;
            if (progressive.size() != total_steps - 1 || sum != expected) {
                throw RangeError("run_inference: progressive counts must have K-1 entries summing to N - N_r");
            }
        }
        prune_rng = SeededRng(plan->rng_seed);
    }

    SeededRng rng(policy.rng_seed);
    InferenceResult result;
    while (!state.finished()) {
        const std::size_t k = state.step;
        const bool will_prune = plan && k < total_steps && detail::prunes_after(*plan, k, progressive);
        const bool needs_scores =
            (will_prune && plan->strategy != PruneStrategy::RandomOnce) ||
            (options.score_trace && !plan && k < total_steps);
        CaptureMode mode = options.trace_capture;
        if (needs_scores && mode == CaptureMode::None) {
            mode = CaptureMode::Mean;
        }

        result.stats.sequence_lengths.push_back(state.sequence_length());
        result.stats.visual_counts.push_back(state.visual_count());
        StepResult r = step(std::move(state), w, policy, rng, mode);
        state = std::move(r.state);
        StepOutcome& outcome = r.outcome;
        ++result.stats.forward_passes;
        result.stats.step_seconds.push_back(outcome.seconds);

        std::optional<Matrix> abar;
        if (needs_scores) {
            abar = outcome.mean_attention ? *outcome.mean_attention : mean_attention(*outcome.attention);
        }

        if (options.score_trace && !plan && k < total_steps) {
            if (!guidance_rows(state, *options.score_trace).empty()) {
                result.score_trace.push_back(score_visual_tokens(state, *abar, *options.score_trace, k));
            }
        }

        if (will_prune) {
            const auto prune_started = std::chrono::steady_clock::now();
            KeepSet keep;
            if (plan->strategy == PruneStrategy::RandomOnce) {
                keep = random_keep(state.visual_index_map, plan->ratio, prune_rng);
            } else {
                const ImportanceScores scores = score_visual_tokens(state, *abar, plan->scorer, k);
                const std::size_t count = plan->strategy == PruneStrategy::Progressive
                                              ? state.visual_count() - progressive[k - 1]
                                              : retained_count(state.visual_count(), plan->ratio);
                keep = select_top_count(state.visual_index_map, scores, count);
            }
            state = apply_prune(std::move(state), keep);
            result.keep_sets.push_back(std::move(keep));
            result.stats.prune_seconds +=
                std::chrono::duration<double>(std::chrono::steady_clock::now() - prune_started).count();
        }

        if (options.trace_capture == CaptureMode::None) {
            outcome.attention.reset();
            outcome.mean_attention.reset();
        }
        result.trace.push_back(std::move(outcome));
    }

    result.response_ids = state.response_ids;
    result.final_state = std::move(state);
    result.stats.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

}  // namespace maskprune
