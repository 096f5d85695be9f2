#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iterator>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maskprune/error.hpp"
#include "maskprune/model.hpp"
#include "maskprune/numerics.hpp"

namespace maskprune {

enum class SchedulePolicyKind {
    Stochastic,               // each masked position stays masked with probability q_k
    DeterministicConfidence,  // commit the target(k) most confident positions
};

struct SchedulePolicy {
    SchedulePolicyKind kind = SchedulePolicyKind::DeterministicConfidence;
    std::uint64_t rng_seed = 0;

    static SchedulePolicy stochastic(std::uint64_t seed) { return {SchedulePolicyKind::Stochastic, seed}; }
    static SchedulePolicy confidence() { return {SchedulePolicyKind::DeterministicConfidence, 0}; }
};

/// The live sequence Concat(V, T, R_k) at step k.
///
/// Response positions are tracked by id; masked positions hold mask_token_id.
/// `masked` and `decoded` are sorted, disjoint and together cover 0..tau-1.
struct SequenceState {
    Matrix visual;                               // current N (or N_r) rows, positions baked in
    Matrix prompt;                               // m rows
    std::vector<TokenId> response_ids;           // tau ids
    std::vector<std::size_t> masked;             // I_k(M), response coordinates
    std::vector<std::size_t> decoded;            // I_k(D), response coordinates
    std::vector<std::size_t> visual_index_map;   // I(V): original indices of surviving visual rows
    std::size_t step = 1;
    std::size_t total_steps = 1;
    std::size_t response_first_position = 0;     // positional index of response slot 0
    TokenId mask_token_id = 0;

    std::size_t visual_count() const noexcept { return visual.rows(); }
    std::size_t prompt_length() const noexcept { return prompt.rows(); }
    std::size_t response_length() const noexcept { return response_ids.size(); }
    std::size_t sequence_length() const noexcept {
        return visual_count() + prompt_length() + response_length();
    }
    /// Sequence row of response slot p.
    std::size_t response_row(std::size_t p) const noexcept { return visual_count() + prompt_length() + p; }
    bool finished() const noexcept { return step > total_steps; }
};

/// Everything one inference step produced.
struct StepOutcome {
    std::size_t step_index = 0;
    std::vector<std::size_t> newly_decoded;
    std::optional<AttentionCapture> attention;  // CaptureMode::Full
    std::optional<Matrix> mean_attention;       // CaptureMode::Mean
    std::vector<std::size_t> snapshot_positions;  // response slots masked before the step
    Matrix logits_snapshot;                       // one row per snapshot position
    std::size_t sequence_length = 0;
    double seconds = 0.0;
};

struct StepResult {
    SequenceState state;
    StepOutcome outcome;
};

/// R_1: every response slot masked, step 1, visual_index_map = 0..N-1.
inline SequenceState init_state(Matrix visual, Matrix prompt, std::size_t tau, std::size_t total_steps,
                                TokenId mask_token_id) {
    if (tau < 1) {
        throw RangeError("init_state: tau must be >= 1");
    }
    if (total_steps < 1) {
        throw RangeError("init_state: K must be >= 1");
    }
    if (prompt.rows() == 0 && prompt.cols() == 0) {
        prompt = Matrix(0, visual.cols());
    }
    if (visual.cols() != prompt.cols()) {
        throw ShapeError("init_state: visual and prompt widths differ");
    }
    SequenceState s;
    s.response_first_position = visual.rows() + prompt.rows();
    s.visual_index_map.resize(visual.rows());
    for (std::size_t i = 0; i < visual.rows(); ++i) {
        s.visual_index_map[i] = i;
    }
    s.visual = std::move(visual);
    s.prompt = std::move(prompt);
    s.response_ids.assign(tau, mask_token_id);
    s.masked.resize(tau);
    for (std::size_t p = 0; p < tau; ++p) {
        s.masked[p] = p;
    }
    s.step = 1;
    s.total_steps = total_steps;
    s.mask_token_id = mask_token_id;
    return s;
}

/// Probability that a masked slot stays masked at step k:
/// q_k = (1 - k/K) / (1 - (k-1)/K) = (K - k) / (K - k + 1).
inline double remask_prob(std::size_t k, std::size_t total_steps) {
    if (k < 1 || k > total_steps) {
        throw RangeError("remask_prob: k must lie in [1, K]");
    }
    return static_cast<double>(total_steps - k) / static_cast<double>(total_steps - k + 1);
}

/// round(tau * k / K), halves rounded up, in exact integer arithmetic.
inline std::size_t rounded_share(std::size_t tau, std::size_t k, std::size_t total_steps) {
    return (2 * tau * k + total_steps) / (2 * total_steps);
}

/// Slots DeterministicConfidence commits at step k:
/// round(tau*k/K) - round(tau*(k-1)/K). Sums to tau over k = 1..K.
inline std::size_t unmask_target(std::size_t tau, std::size_t k, std::size_t total_steps) {
    if (k < 1 || k > total_steps) {
        throw RangeError("unmask_target: k must lie in [1, K]");
    }
    return rounded_share(tau, k, total_steps) - rounded_share(tau, k - 1, total_steps);
}

/// Concat(V, T, R_k) with response rows rebuilt from token embeddings.
inline Matrix build_sequence(const SequenceState& state, const ModelWeights& w) {
    const Matrix response = embed_tokens(state.response_ids, w, state.response_first_position);
    return vstack({&state.visual, &state.prompt, &response});
}

namespace detail {

struct Prediction {
    TokenId token = 0;
    double confidence = 0.0;
};

// Argmax over the vocabulary excluding the mask token; confidence is the
// softmax probability of the chosen token.
inline Prediction predict(std::span<const double> logits, TokenId mask_token_id) {
    double peak = -std::numeric_limits<double>::infinity();
    for (double v : logits) {
        peak = std::max(peak, v);
    }
    double total = 0.0;
    for (double v : logits) {
        total += std::exp(v - peak);
    }
    Prediction best;
    double best_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < logits.size(); ++t) {
        if (t == mask_token_id) {
            continue;
        }
        if (logits[t] > best_logit) {
            best_logit = logits[t];
            best.token = static_cast<TokenId>(t);
        }
    }
    best.confidence = std::exp(best_logit - peak) / total;
    return best;
}

}  // namespace detail

/// One denoising step: a forward pass over the full sequence, then masked
/// slots are committed per the policy. Already-decoded slots never change.
inline StepResult step(SequenceState state, const ModelWeights& w, const SchedulePolicy& policy,
                       SeededRng& rng, CaptureMode capture = CaptureMode::None) {
    if (state.finished()) {
        throw RangeError("step: all " + std::to_string(state.total_steps) + " steps already taken");
    }
    if (state.visual.cols() != w.config.d_model) {
        throw ShapeError("step: sequence width does not match model");
    }
    const auto started = std::chrono::steady_clock::now();
    const std::size_t k = state.step;

    StepOutcome outcome;
    outcome.step_index = k;
    const Matrix x = build_sequence(state, w);
    outcome.sequence_length = x.rows();
    ForwardResult fwd = forward(x, w, capture);
    if (fwd.attention) {
        fwd.attention->step_index = k;
    }
    outcome.attention = std::move(fwd.attention);
    outcome.mean_attention = std::move(fwd.mean_attention);

    const std::size_t vocab = fwd.logits.cols();
    outcome.snapshot_positions = state.masked;
    outcome.logits_snapshot = Matrix(state.masked.size(), vocab);
    std::vector<detail::Prediction> predictions(state.masked.size());
    for (std::size_t i = 0; i < state.masked.size(); ++i) {
        auto row = fwd.logits.row(state.response_row(state.masked[i]));
        std::copy(row.begin(), row.end(), outcome.logits_snapshot.row(i).begin());
        predictions[i] = detail::predict(row, state.mask_token_id);
    }

    std::vector<std::size_t> commit;  // indices into state.masked
    if (policy.kind == SchedulePolicyKind::Stochastic) {
        const double q = remask_prob(k, state.total_steps);
        for (std::size_t i = 0; i < state.masked.size(); ++i) {
            if (!bernoulli(q, rng)) {
                commit.push_back(i);
            }
        }
    } else {
        const std::size_t want =
            std::min(unmask_target(state.response_length(), k, state.total_steps), state.masked.size());
        std::vector<std::size_t> order(state.masked.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
            order[i] = i;
        }
        // Higher confidence first; ties go to the lower slot index.
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return predictions[a].confidence > predictions[b].confidence;
        });
        commit.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(want));
        std::sort(commit.begin(), commit.end());
    }

    std::vector<std::size_t> still_masked;
    still_masked.reserve(state.masked.size() - commit.size());
    std::size_t c = 0;
    for (std::size_t i = 0; i < state.masked.size(); ++i) {
        const std::size_t slot = state.masked[i];
        if (c < commit.size() && commit[c] == i) {
            state.response_ids[slot] = predictions[i].token;
            outcome.newly_decoded.push_back(slot);
            ++c;
        } else {
            still_masked.push_back(slot);
        }
    }
    state.masked = std::move(still_masked);
    std::vector<std::size_t> merged;
    merged.reserve(state.decoded.size() + outcome.newly_decoded.size());
    std::merge(state.decoded.begin(), state.decoded.end(), outcome.newly_decoded.begin(),
               outcome.newly_decoded.end(), std::back_inserter(merged));
    state.decoded = std::move(merged);
    ++state.step;

    outcome.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return {std::move(state), std::move(outcome)};
}

}  // namespace maskprune
