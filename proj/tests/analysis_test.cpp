#include <gtest/gtest.h>

#include <cmath>

#include "maskprune/maskprune.hpp"

namespace maskprune {
namespace {

// Direct evaluation of L*K*(4nd^2 + 2n^2d + 2nd*mu) in long double.
long double cost_oracle(long double l, long double k, long double n, long double d, long double mu) {
    return l * k * (4 * n * d * d + 2 * n * n * d + 2 * n * d * mu);
}

TEST(FlopsBaseline, HandComputedExample) { EXPECT_EQ(flops_baseline(2, 4, 16, 8, 16), 98304u); }

TEST(FlopsBaseline, ZeroLengthCostsNothing) { EXPECT_EQ(flops_baseline(2, 4, 0, 8, 16), 0u); }

TEST(FlopsBaseline, AllOnes) { EXPECT_EQ(flops_baseline(1, 1, 1, 1, 1), 8u); }

TEST(FlopsBaseline, OverflowIsReported) {
    EXPECT_THROW(flops_baseline(1u << 20, 1u << 20, 1u << 20, 1u << 20, 1), std::overflow_error);
}

TEST(FlopsBaseline, StepAdditivityAndOracle) {
    SeededRng rng(1);
    for (int trial = 0; trial < 1000; ++trial) {
        const FlopCount l = 1 + rng.uniform_below(32);
        const FlopCount k = 1 + rng.uniform_below(64);
        const FlopCount n = rng.uniform_below(4096);
        const FlopCount d = 1 + rng.uniform_below(1024);
        const FlopCount mu = 1 + rng.uniform_below(4096);
        EXPECT_EQ(flops_baseline(l, k, n, d, mu), k * flops_baseline(l, 1, n, d, mu));
        EXPECT_EQ(static_cast<long double>(flops_baseline(l, k, n, d, mu)), cost_oracle(l, k, n, d, mu));
    }
}

TEST(FlopsPruned, HandComputedExample) {
    const FlopsReport r = flops_pruned(2, 4, 16, 8, 8, 16);
    EXPECT_EQ(r.baseline, 98304u);
    EXPECT_EQ(r.pruned, 55296u);
    EXPECT_DOUBLE_EQ(r.ratio, 0.5625);
}

TEST(FlopsPruned, NoPruningIsBaseline) {
    const FlopsReport r = flops_pruned(3, 5, 40, 40, 16, 64);
    EXPECT_EQ(r.pruned, r.baseline);
    EXPECT_DOUBLE_EQ(r.ratio, 1.0);
}

TEST(FlopsPruned, SingleStepIgnoresPrunedLength) {
    const FlopsReport r = flops_pruned(3, 1, 40, 5, 16, 64);
    EXPECT_EQ(r.pruned, r.baseline);
}

TEST(FlopsPruned, RejectsLongerPrunedLength) {
    EXPECT_THROW(flops_pruned(1, 2, 4, 5, 1, 1), RangeError);
    EXPECT_THROW(flops_pruned(1, 0, 4, 4, 1, 1), RangeError);
}

TEST(FlopsPruned, MonotoneInPrunedLengthAndMatchesOracle) {
    SeededRng rng(2);
    for (int trial = 0; trial < 1000; ++trial) {
        const FlopCount l = 1 + rng.uniform_below(8);
        const FlopCount k = 1 + rng.uniform_below(32);
        const FlopCount n = 1 + rng.uniform_below(2048);
        const FlopCount a = rng.uniform_below(n + 1);
        const FlopCount b = a + rng.uniform_below(n - a + 1);
        const FlopCount d = 1 + rng.uniform_below(256);
        const FlopCount mu = 1 + rng.uniform_below(1024);
        const FlopsReport ra = flops_pruned(l, k, n, a, d, mu);
        const FlopsReport rb = flops_pruned(l, k, n, b, d, mu);
        EXPECT_LE(ra.pruned, rb.pruned);
        EXPECT_LE(rb.ratio, 1.0);
        EXPECT_GT(ra.ratio, 0.0);
        EXPECT_EQ(static_cast<long double>(ra.pruned), cost_oracle(l, 1, n, d, mu) + cost_oracle(l, k - 1, a, d, mu));
    }
}

TEST(StepLengths, BaselineIsConstant) {
    EXPECT_EQ(step_lengths(std::nullopt, 64, 2, 8, 4, 0.5), (std::vector<std::size_t>{74, 74, 74, 74}));
}

TEST(StepLengths, OnceDropsAfterFirstStep) {
    EXPECT_EQ(step_lengths(PruneStrategy::OnceAfterStep1, 64, 2, 8, 4, 0.25),
              (std::vector<std::size_t>{74, 26, 26, 26}));
}

TEST(StepLengths, ProgressiveDropsGradually) {
    EXPECT_EQ(step_lengths(PruneStrategy::Progressive, 64, 2, 8, 4, 0.5), (std::vector<std::size_t>{74, 63, 52, 42}));
}

TEST(StepLengths, OnceNeverLongerThanProgressive) {
    SeededRng rng(3);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.uniform_below(2000);
        const std::size_t steps = 2 + rng.uniform_below(30);
        const double r = std::max(1e-3, rng.uniform());
        const auto once = step_lengths(PruneStrategy::OnceAfterStep1, n, 16, 32, steps, r);
        const auto pp = step_lengths(PruneStrategy::Progressive, n, 16, 32, steps, r);
        for (std::size_t k = 0; k < steps; ++k) EXPECT_LE(once[k], pp[k]);
    }
}

TEST(Cosine, SelfSimilarityIsOne) {
    const std::vector<double> u{0.3, 0.1, 0.7};
    EXPECT_NEAR(cosine(u, u), 1.0, 1e-15);
}

TEST(Cosine, OrthogonalIsZero) {
    const std::vector<double> u{1, 0}, v{0, 1};
    EXPECT_EQ(cosine(u, v), 0.0);
}

TEST(Cosine, DiagonalCase) {
    const std::vector<double> u{1, 0}, v{1, 1};
    EXPECT_NEAR(cosine(u, v), std::sqrt(2.0) / 2.0, 1e-12);
}

TEST(Cosine, ErrorsOnZeroOrMismatch) {
    const std::vector<double> u{0, 0}, v{1, 1}, w{1};
    EXPECT_THROW(cosine(u, v), RangeError);
    EXPECT_THROW(cosine(v, w), ShapeError);
}

TEST(SimilarityCurve, StationaryTraceIsAllOnes) {
    const std::vector<std::vector<double>> trace(5, std::vector<double>{0.1, 0.5, 0.2});
    const SimilarityCurve c = similarity_curve(std::span<const std::vector<double>>(trace));
    EXPECT_EQ(c.steps, (std::vector<std::size_t>{2, 3, 4, 5}));
    for (double s : c.sims) EXPECT_NEAR(s, 1.0, 1e-15);
    EXPECT_EQ(c.sample_count, 1u);
}

TEST(SimilarityCurve, TwoSampleAverageIsMeanOfCurves) {
    const std::vector<std::vector<double>> a{{1, 0}, {1, 1}, {0, 1}};
    const std::vector<std::vector<double>> b{{1, 1}, {1, 1}, {2, 1}};
    const std::vector<std::vector<std::vector<double>>> both{a, b};
    const SimilarityCurve ca = similarity_curve(std::span<const std::vector<double>>(a));
    const SimilarityCurve cb = similarity_curve(std::span<const std::vector<double>>(b));
    const SimilarityCurve avg = similarity_curve(std::span<const std::vector<std::vector<double>>>(both));
    ASSERT_EQ(avg.sims.size(), 2u);
    EXPECT_EQ(avg.sample_count, 2u);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(avg.sims[i], (ca.sims[i] + cb.sims[i]) / 2.0, 1e-15);
}

TEST(SimilarityCurve, SingleSampleAverageIsThatCurve) {
    const std::vector<std::vector<double>> a{{1, 2}, {2, 1}, {3, 3}};
    const std::vector<std::vector<std::vector<double>>> one{a};
    const SimilarityCurve c = similarity_curve(std::span<const std::vector<double>>(a));
    const SimilarityCurve avg = similarity_curve(std::span<const std::vector<std::vector<double>>>(one));
    EXPECT_EQ(avg, c);
}

TEST(SimilarityCurve, MismatchedLengthsThrow) {
    const std::vector<std::vector<double>> trace{{1, 2, 3}, {1, 2}};
    EXPECT_THROW(similarity_curve(std::span<const std::vector<double>>(trace)), ShapeError);
    const std::vector<std::vector<double>> tiny{{1, 2}};
    EXPECT_THROW(similarity_curve(std::span<const std::vector<double>>(tiny)), RangeError);
}

}  // namespace
}  // namespace maskprune
