#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "maskprune/error.hpp"
#include "maskprune/pruning.hpp"

namespace maskprune {

using FlopCount = std::uint64_t;

namespace detail {

inline FlopCount checked_mul(FlopCount a, FlopCount b) {
    FlopCount out = 0;
    if (__builtin_mul_overflow(a, b, &out)) {
        throw std::overflow_error("FLOP count overflows 64 bits");
    }
    return out;
}

inline FlopCount checked_add(FlopCount a, FlopCount b) {
    FlopCount out = 0;
    if (__builtin_add_overflow(a, b, &out)) {
        throw std::overflow_error("FLOP count overflows 64 bits");
    }
    return out;
}

}  // namespace detail

/// One step of L layers at sequence length n: L * (4nd^2 + 2n^2d + 2ndmu).
inline FlopCount flops_per_step(FlopCount layers, FlopCount n, FlopCount d, FlopCount mu) {
    using detail::checked_add;
    using detail::checked_mul;
    const FlopCount proj = checked_mul(4, checked_mul(n, checked_mul(d, d)));
    const FlopCount attn = checked_mul(2, checked_mul(checked_mul(n, n), d));
    const FlopCount ffn = checked_mul(2, checked_mul(checked_mul(n, d), mu));
    return checked_mul(layers, checked_add(checked_add(proj, attn), ffn));
}

/// L * K * (4nd^2 + 2n^2d + 2ndmu).
inline FlopCount flops_baseline(FlopCount layers, FlopCount steps, FlopCount n, FlopCount d, FlopCount mu) {
    return detail::checked_mul(steps, flops_per_step(layers, n, d, mu));
}

/// Sum of per-step costs for an explicit length schedule.
inline FlopCount flops_for_lengths(FlopCount layers, std::span<const std::size_t> lengths, FlopCount d, FlopCount mu) {
    FlopCount total = 0;
    for (std::size_t n : lengths) {
        total = detail::checked_add(total, flops_per_step(layers, n, d, mu));
    }
    return total;
}

struct FlopsReport {
    FlopCount baseline = 0;
    FlopCount pruned = 0;
    double ratio = 1.0;
    FlopCount layers = 0;
    FlopCount steps = 0;
    FlopCount n = 0;
    FlopCount n_r = 0;
    FlopCount d = 0;
    FlopCount mu = 0;

    friend bool operator==(const FlopsReport&, const FlopsReport&) = default;
};

/// Step 1 at full length n, steps 2..K at the pruned length n_r.
inline FlopsReport flops_pruned(FlopCount layers, FlopCount steps, FlopCount n, FlopCount n_r, FlopCount d,
                                FlopCount mu) {
    if (n_r > n) {
        throw RangeError("flops_pruned: n_r exceeds n");
    }
    if (steps < 1) {
        throw RangeError("flops_pruned: K must be >= 1");
    }
    FlopsReport r{0, 0, 1.0, layers, steps, n, n_r, d, mu};
    r.baseline = flops_baseline(layers, steps, n, d, mu);
    r.pruned = detail::checked_add(flops_per_step(layers, n, d, mu),
                                   detail::checked_mul(steps - 1, flops_per_step(layers, n_r, d, mu)));
    r.ratio = r.baseline == 0 ? 1.0 : static_cast<double>(r.pruned) / static_cast<double>(r.baseline);
    return r;
}

/// Per-step sequence lengths N_k + m + tau for a strategy (nullopt = baseline).
inline std::vector<std::size_t> step_lengths(std::optional<PruneStrategy> strategy, std::size_t n_visual,
                                             std::size_t m, std::size_t tau, std::size_t steps, double r) {
    std::vector<std::size_t> lengths;
    lengths.reserve(steps);
    std::size_t current = n_visual;
    std::vector<std::size_t> counts;
    if (strategy == PruneStrategy::Progressive) {
        counts = plan_progressive(n_visual, r, steps);
    }
    for (std::size_t k = 1; k <= steps; ++k) {
        lengths.push_back(current + m + tau);
        if (!strategy || k == steps) {
            continue;
        }
        if (*strategy == PruneStrategy::Progressive) {
            current -= counts[k - 1];
        } else if (k == 1) {
            current = retained_count(n_visual, r);
        }
    }
    return lengths;
}

/// u.v / (|u| |v|).
inline double cosine(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) {
        throw ShapeError("cosine: length mismatch");
    }
    double dot = 0.0;
    double uu = 0.0;
    double vv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        uu += u[i] * u[i];
        vv += v[i] * v[i];
    }
    if (uu == 0.0 || vv == 0.0) {
        throw RangeError("cosine: zero vector");
    }
    return dot / (std::sqrt(uu) * std::sqrt(vv));
}

/// Sim_k = cos(S_k, S_1) for k = 2, 3, ...; sims[i] belongs to steps[i].
struct SimilarityCurve {
    std::vector<std::size_t> steps;
    std::vector<double> sims;
    std::size_t sample_count = 0;

    double min() const {
        double m = 1.0;
        for (double s : sims) m = std::min(m, s);
        return m;
    }

    friend bool operator==(const SimilarityCurve&, const SimilarityCurve&) = default;
};

/// Curve for one trace S_1, S_2, ... (all of one length).
inline SimilarityCurve similarity_curve(std::span<const std::vector<double>> trace) {
    if (trace.size() < 2) {
        throw RangeError("similarity_curve: need at least two score vectors");
    }
    SimilarityCurve c;
    c.sample_count = 1;
    for (std::size_t k = 1; k < trace.size(); ++k) {
        if (trace[k].size() != trace.front().size()) {
            throw ShapeError("similarity_curve: score vectors differ in length (trace crosses a pruning boundary?)");
        }
        c.steps.push_back(k + 1);
        c.sims.push_back(cosine(trace[k], trace.front()));
    }
    return c;
}

/// Average of per-sample curves, point by point. A sample contributes to Sim_k
/// only if its trace reaches step k.
inline SimilarityCurve similarity_curve(std::span<const std::vector<std::vector<double>>> samples) {
    if (samples.empty()) {
        throw RangeError("similarity_curve: no samples");
    }
    std::vector<double> sums;
    std::vector<std::size_t> counts;
    for (const auto& trace : samples) {
        const SimilarityCurve one = similarity_curve(std::span<const std::vector<double>>(trace));
        if (one.sims.size() > sums.size()) {
            sums.resize(one.sims.size(), 0.0);
            counts.resize(one.sims.size(), 0);
        }
        for (std::size_t i = 0; i < one.sims.size(); ++i) {
            sums[i] += one.sims[i];
            ++counts[i];
        }
    }
    SimilarityCurve c;
    c.sample_count = samples.size();
    for (std::size_t i = 0; i < sums.size(); ++i) {
        c.steps.push_back(i + 2);
        c.sims.push_back(sums[i] / static_cast<double>(counts[i]));
    }
    return c;
}

}  // namespace maskprune
