#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "maskprune/decoder.hpp"
#include "maskprune/error.hpp"
#include "maskprune/model.hpp"
#include "maskprune/numerics.hpp"

namespace maskprune {

/// Which sequence rows guide the visual importance score.
enum class ScorerKind {
    MaskedRows,             // I(M): still-masked response rows
    PromptRows,             // I(T)
    DecodedRows,            // I(D)
    AllResponseRows,        // I(M+D)
    PromptAndResponseRows,  // I(T+M+D)
    VisualRows,             // I(V)
    PromptAndMaskedRows,    // I(T+M)
};

inline constexpr ScorerKind kAllScorers[] = {
    ScorerKind::MaskedRows,      ScorerKind::PromptRows,           ScorerKind::DecodedRows,
    ScorerKind::AllResponseRows, ScorerKind::PromptAndResponseRows, ScorerKind::VisualRows,
    ScorerKind::PromptAndMaskedRows,
};

inline std::string_view to_string(ScorerKind s) {
    switch (s) {
        case ScorerKind::MaskedRows: return "masked";
        case ScorerKind::PromptRows: return "prompt";
        case ScorerKind::DecodedRows: return "decoded";
        case ScorerKind::AllResponseRows: return "response";
        case ScorerKind::PromptAndResponseRows: return "prompt+response";
        case ScorerKind::VisualRows: return "visual";
        case ScorerKind::PromptAndMaskedRows: return "prompt+masked";
    }
    return "?";
}

inline std::optional<ScorerKind> parse_scorer(std::string_view name) {
    for (ScorerKind s : kAllScorers) {
        if (to_string(s) == name) {
            return s;
        }
    }
    return std::nullopt;
}

enum class PruneStrategy {
    OnceAfterStep1,  // top-r by importance, once, after step 1
    RandomOnce,      // uniformly random r-subset after step 1
    Progressive,     // spread the prunes over steps 1..K-1, rescoring each time
};

inline std::string_view to_string(PruneStrategy s) {
    switch (s) {
        case PruneStrategy::OnceAfterStep1: return "once";
        case PruneStrategy::RandomOnce: return "random";
        case PruneStrategy::Progressive: return "progressive";
    }
    return "?";
}

inline std::optional<PruneStrategy> parse_strategy(std::string_view name) {
    for (PruneStrategy s : {PruneStrategy::OnceAfterStep1, PruneStrategy::RandomOnce, PruneStrategy::Progressive}) {
        if (to_string(s) == name) {
            return s;
        }
    }
    return std::nullopt;
}

/// Per-visual-token score S_k, aligned with the state's visual_index_map.
struct ImportanceScores {
    std::vector<double> values;
    std::size_t source_step = 0;
    ScorerKind scorer = ScorerKind::MaskedRows;
};

/// Retained visual tokens, as strictly increasing original indices.
struct KeepSet {
    std::vector<std::size_t> indices;

    std::size_t size() const noexcept { return indices.size(); }
    friend bool operator==(const KeepSet&, const KeepSet&) = default;
};

struct PrunePlan {
    PruneStrategy strategy = PruneStrategy::OnceAfterStep1;
    double ratio = 1.0;
    ScorerKind scorer = ScorerKind::MaskedRows;
    std::uint64_t rng_seed = 0;                 // RandomOnce
    std::vector<std::size_t> per_step_counts;   // Progressive; empty = derive from (N, r, K)

    void validate() const {
        if (!(ratio > 0.0 && ratio <= 1.0)) {
            throw RangeError("PrunePlan: ratio must lie in (0, 1]");
        }
    }
};

inline void check_ratio(double r, const char* who) {
    if (!(r > 0.0 && r <= 1.0)) {
        throw RangeError(std::string(who) + ": r must lie in (0, 1]");
    }
}

/// N_r = max(1, floor(N * r)). The 1e-9 guard absorbs binary error in
/// decimal ratios such as 0.29.
inline std::size_t retained_count(std::size_t n, double r) {
    check_ratio(r, "retained_count");
    if (n == 0) {
        return 0;
    }
    const auto kept = static_cast<std::size_t>(std::floor(static_cast<double>(n) * r + 1e-9));
    return std::clamp<std::size_t>(kept, 1, n);
}

/// Layer/head average of a capture: (1 / (L*H)) * sum of every map.
inline Matrix mean_attention(const AttentionCapture& capture) {
    if (capture.maps.empty()) {
        throw ShapeError("mean_attention: empty capture");
    }
    const std::size_t n = capture.maps.front().rows();
    Matrix out(n, capture.maps.front().cols());
    const double w = 1.0 / static_cast<double>(capture.maps.size());
    for (const Matrix& m : capture.maps) {
        if (m.rows() != out.rows() || m.cols() != out.cols()) {
            throw ShapeError("mean_attention: inconsistent map dimensions");
        }
        auto dst = out.data();
        auto src = m.data();
        for (std::size_t i = 0; i < dst.size(); ++i) {
            dst[i] += w * src[i];
        }
    }
    return out;
}

/// Mean over guidance rows of abar[row, c] for each visual column c.
inline ImportanceScores importance_scores(const Matrix& abar, std::span<const std::size_t> guidance_rows,
                                          std::span<const std::size_t> visual_cols, std::size_t source_step = 0,
                                          ScorerKind scorer = ScorerKind::MaskedRows) {
    if (guidance_rows.empty()) {
        throw EmptyGuidanceSet("importance_scores: guidance set '" + std::string(to_string(scorer)) +
                               "' is empty at step " + std::to_string(source_step));
    }
    ImportanceScores s;
    s.source_step = source_step;
    s.scorer = scorer;
    s.values.assign(visual_cols.size(), 0.0);
    for (std::size_t c : visual_cols) {
        if (c >= abar.cols()) {
            throw RangeError("importance_scores: visual column out of range");
        }
    }
    for (std::size_t r : guidance_rows) {
        if (r >= abar.rows()) {
            throw RangeError("importance_scores: guidance row out of range");
        }
        auto row = abar.row(r);
        for (std::size_t i = 0; i < visual_cols.size(); ++i) {
            s.values[i] += row[visual_cols[i]];
        }
    }
    const double inv = 1.0 / static_cast<double>(guidance_rows.size());
    for (double& v : s.values) {
        v *= inv;
    }
    return s;
}

/// Keeps the `count` highest-scoring tokens; ties go to the lower original
/// index. Output is sorted by original index.
inline KeepSet select_top_count(std::span<const std::size_t> visual_indices, const ImportanceScores& scores,
                                std::size_t count) {
    if (visual_indices.size() != scores.values.size()) {
        throw ShapeError("select_top: index and score lengths differ");
    }
    count = std::min(count, visual_indices.size());
    std::vector<std::size_t> order(visual_indices.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores.values[a] != scores.values[b]) {
            return scores.values[a] > scores.values[b];
        }
        return visual_indices[a] < visual_indices[b];
    });
    KeepSet keep;
    keep.indices.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        keep.indices.push_back(visual_indices[order[i]]);
    }
    std::sort(keep.indices.begin(), keep.indices.end());
    return keep;
}

/// Top(I(V), S, r): the max(1, floor(N*r)) highest-scoring visual tokens.
inline KeepSet select_top(std::span<const std::size_t> visual_indices, const ImportanceScores& scores, double r) {
    check_ratio(r, "select_top");
    return select_top_count(visual_indices, scores, retained_count(visual_indices.size(), r));
}

/// Restricts the visual segment to `keep`, preserving original order.
inline SequenceState apply_prune(SequenceState state, const KeepSet& keep) {
    std::vector<std::size_t> rows;
    rows.reserve(keep.indices.size());
    for (std::size_t i = 0; i < keep.indices.size(); ++i) {
        if (i > 0 && keep.indices[i] <= keep.indices[i - 1]) {
            throw RangeError("apply_prune: keep indices must be strictly increasing");
        }
        auto it = std::lower_bound(state.visual_index_map.begin(), state.visual_index_map.end(), keep.indices[i]);
        if (it == state.visual_index_map.end() || *it != keep.indices[i]) {
            throw RangeError("apply_prune: visual token " + std::to_string(keep.indices[i]) + " is not present");
        }
        rows.push_back(static_cast<std::size_t>(it - state.visual_index_map.begin()));
    }
    Matrix visual(rows.size(), state.visual.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto src = state.visual.row(rows[i]);
        std::copy(src.begin(), src.end(), visual.row(i).begin());
    }
    state.visual = std::move(visual);
    state.visual_index_map = keep.indices;
    return state;
}

/// Uniformly random N_r-subset (partial Fisher-Yates), sorted.
inline KeepSet random_keep(std::span<const std::size_t> visual_indices, double r, SeededRng& rng) {
    check_ratio(r, "random_keep");
    const std::size_t count = retained_count(visual_indices.size(), r);
    std::vector<std::size_t> pool(visual_indices.begin(), visual_indices.end());
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.uniform_below(pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(count);
    std::sort(pool.begin(), pool.end());
    return KeepSet{std::move(pool)};
}

/// Per-step prune counts for progressive pruning after steps 1..K-1: the
/// N - N_r removals split as evenly as possible, remainder to the earliest steps.
inline std::vector<std::size_t> plan_progressive(std::size_t n, double r, std::size_t total_steps) {
    check_ratio(r, "plan_progressive");
    const std::size_t removals = n - retained_count(n, r);
    if (total_steps < 2) {
        if (removals > 0) {
            throw RangeError("plan_progressive: K must be >= 2 when r < 1");
        }
        return {};
    }
    const std::size_t slots = total_steps - 1;
    std::vector<std::size_t> counts(slots, removals / slots);
    for (std::size_t i = 0; i < removals % slots; ++i) {
        ++counts[i];
    }
    return counts;
}

/// Sequence rows (Concat coordinates) of the chosen guidance set.
inline std::vector<std::size_t> guidance_rows(const SequenceState& state, ScorerKind scorer) {
    const std::size_t n_vis = state.visual_count();
    const std::size_t m = state.prompt_length();
    std::vector<std::size_t> rows;
    auto add_visual = [&] {
        for (std::size_t i = 0; i < n_vis; ++i) rows.push_back(i);
    };
    auto add_prompt = [&] {
        for (std::size_t j = 0; j < m; ++j) rows.push_back(n_vis + j);
    };
    auto add_response = [&](const std::vector<std::size_t>& slots) {
        for (std::size_t p : slots) rows.push_back(state.response_row(p));
    };
    switch (scorer) {
        case ScorerKind::MaskedRows: add_response(state.masked); break;
        case ScorerKind::PromptRows: add_prompt(); break;
        case ScorerKind::DecodedRows: add_response(state.decoded); break;
        case ScorerKind::AllResponseRows:
            add_response(state.masked);
            add_response(state.decoded);
            break;
        case ScorerKind::PromptAndResponseRows:
            add_prompt();
            add_response(state.masked);
            add_response(state.decoded);
            break;
        case ScorerKind::VisualRows: add_visual(); break;
        case ScorerKind::PromptAndMaskedRows:
            add_prompt();
            add_response(state.masked);
            break;
    }
    std::sort(rows.begin(), rows.end());
    return rows;
}

/// Columns of the visual segment: 0..N_cur-1.
inline std::vector<std::size_t> visual_columns(const SequenceState& state) {
    std::vector<std::size_t> cols(state.visual_count());
    std::iota(cols.begin(), cols.end(), std::size_t{0});
    return cols;
}

/// Scores the current visual tokens from the mean attention of the pass that
/// produced `state` (i.e. guidance sets are read after the step).
inline ImportanceScores score_visual_tokens(const SequenceState& state, const Matrix& abar, ScorerKind scorer,
                                            std::size_t source_step) {
    if (abar.rows() != state.sequence_length()) {
        throw ShapeError("score_visual_tokens: attention map does not match sequence length");
    }
    const auto rows = guidance_rows(state, scorer);
    const auto cols = visual_columns(state);
    return importance_scores(abar, rows, cols, source_step, scorer);
}

}  // namespace maskprune
