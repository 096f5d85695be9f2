#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "maskprune/error.hpp"

namespace maskprune {

// ---------------------------------------------------------------------------
// Matrix
// ---------------------------------------------------------------------------

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw ShapeError("Matrix: data length " + std::to_string(data_.size()) +
                             " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
        }
    }

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        const std::size_t r = rows.size();
        const std::size_t c = r == 0 ? 0 : rows.begin()->size();
        std::vector<double> data;
        data.reserve(r * c);
        for (const auto& row : rows) {
            if (row.size() != c) {
                throw ShapeError("Matrix::from_rows: ragged rows");
            }
            data.insert(data.end(), row.begin(), row.end());
        }
        return Matrix(r, c, std::move(data));
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            m(i, i) = 1.0;
        }
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    bool is_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Standard product a * b.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " * " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
    const std::size_t n = a.rows();
    const std::size_t inner = a.cols();
    const std::size_t m = b.cols();
    Matrix out(n, m);
    // i-k-j order keeps the inner loop contiguous in both b and out.
    for (std::size_t i = 0; i < n; ++i) {
        double* __restrict dst = out.row(i).data();
        const double* arow = a.row(i).data();
        for (std::size_t k = 0; k < inner; ++k) {
            const double s = arow[k];
            if (s == 0.0) {
                continue;
            }
            const double* __restrict src = b.row(k).data();
            for (std::size_t j = 0; j < m; ++j) {
                dst[j] += s * src[j];
            }
        }
    }
    return out;
}

inline Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out(j, i) = m(i, j);
        }
    }
    return out;
}

/// Copies columns [first, first + count) into a new matrix.
inline Matrix slice_cols(const Matrix& m, std::size_t first, std::size_t count) {
    if (first + count > m.cols()) {
        throw ShapeError("slice_cols: column range out of bounds");
    }
    Matrix out(m.rows(), count);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        std::copy_n(m.row(i).begin() + static_cast<std::ptrdiff_t>(first), count, out.row(i).begin());
    }
    return out;
}

/// Stacks matrices with equal column counts vertically. Zero-row inputs are allowed.
inline Matrix vstack(std::initializer_list<const Matrix*> parts) {
    std::size_t rows = 0;
    std::size_t cols = 0;
    bool have_cols = false;
    for (const Matrix* p : parts) {
        if (p->rows() == 0 && p->cols() == 0) {
            continue;
        }
        if (have_cols && p->cols() != cols) {
            throw ShapeError("vstack: column mismatch");
        }
        cols = p->cols();
        have_cols = true;
        rows += p->rows();
    }
    Matrix out(rows, cols);
    std::size_t at = 0;
    for (const Matrix* p : parts) {
        for (std::size_t i = 0; i < p->rows(); ++i, ++at) {
            std::copy(p->row(i).begin(), p->row(i).end(), out.row(at).begin());
        }
    }
    return out;
}

/// Row-wise softmax with max subtraction. Every output row sums to one.
inline Matrix softmax_rows(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto src = m.row(i);
        auto dst = out.row(i);
        if (src.empty()) {
            continue;
        }
        const double peak = *std::max_element(src.begin(), src.end());
        double total = 0.0;
        for (std::size_t j = 0; j < src.size(); ++j) {
            dst[j] = std::exp(src[j] - peak);
            total += dst[j];
        }
        for (double& v : dst) {
            v /= total;
        }
    }
    return out;
}

/// Normalizes v to zero mean and unit (eps-regularized) variance, then applies
/// gain and bias elementwise.
inline std::vector<double> layer_norm(std::span<const double> v, std::span<const double> gain,
                                      std::span<const double> bias, double eps) {
    if (gain.size() != v.size() || bias.size() != v.size()) {
        throw ShapeError("layer_norm: length mismatch");
    }
    if (!(eps > 0.0)) {
        throw RangeError("layer_norm: eps must be positive");
    }
    std::vector<double> out(v.size());
    if (v.empty()) {
        return out;
    }
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) {
        mean += x;
    }
    mean /= n;
    double var = 0.0;
    for (double x : v) {
        var += (x - mean) * (x - mean);
    }
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = (v[i] - mean) * inv * gain[i] + bias[i];
    }
    return out;
}

/// Applies layer_norm to every row.
inline Matrix layer_norm_rows(const Matrix& m, std::span<const double> gain,
                              std::span<const double> bias, double eps) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = layer_norm(m.row(i), gain, bias, eps);
        std::copy(r.begin(), r.end(), out.row(i).begin());
    }
    return out;
}

// ---------------------------------------------------------------------------
// SeededRng
// ---------------------------------------------------------------------------

/// SplitMix64: a 64-bit counter advanced by the golden-ratio increment and
/// passed through a fixed avalanche mix. Output depends only on the seed and
/// the number of draws, so sequences are bit-identical on every platform.
/// `split()` derives an independent child stream from the next output.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed = 0) noexcept : seed_(seed), state_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() noexcept {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix(state_);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, bound). Rejection sampling, no modulo bias.
    std::uint64_t uniform_below(std::uint64_t bound) {
        if (bound == 0) {
            throw RangeError("SeededRng::uniform_below: bound must be positive");
        }
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t x = next_u64();
            if (x >= threshold) {
                return x % bound;
            }
        }
    }

    /// Standard normal via Box-Muller; consumes two draws.
    double normal() noexcept {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    SeededRng split() noexcept { return SeededRng(mix(next_u64() ^ 0xD1B54A32D192ED03ULL)); }

private:
    static std::uint64_t mix(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::uint64_t state_;
};

/// True with probability p. Consumes exactly one draw.
inline bool bernoulli(double p, SeededRng& rng) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw RangeError("bernoulli: p must lie in [0, 1]");
    }
    return rng.uniform() < p;
}

}  // namespace maskprune
