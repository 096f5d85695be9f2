#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maskprune/error.hpp"
#include "maskprune/numerics.hpp"

namespace maskprune {

using TokenId = std::uint32_t;
using PatchSymbol = std::uint32_t;

struct ModelConfig {
    std::size_t layers = 2;
    std::size_t heads = 2;
    std::size_t d_model = 32;
    std::size_t d_vision = 16;
    std::size_t ffn_width = 64;
    std::size_t vocab = 64;
    std::size_t grid_rows = 4;
    std::size_t grid_cols = 4;
    TokenId mask_token_id = 63;
    std::size_t patch_symbols = 16;
    std::size_t max_positions = 4096;
    double norm_eps = 1e-5;

    std::size_t num_patches() const noexcept { return grid_rows * grid_cols; }
    std::size_t head_dim() const noexcept { return heads == 0 ? 0 : d_model / heads; }

    void validate() const {
        auto positive = [](std::size_t v, const char* name) {
            if (v < 1) {
                throw ConfigError(std::string("ModelConfig: ") + name + " must be >= 1");
            }
        };
        positive(layers, "layers");
        positive(heads, "heads");
        positive(d_model, "d_model");
        positive(d_vision, "d_vision");
        positive(ffn_width, "ffn_width");
        positive(vocab, "vocab");
        positive(grid_rows, "grid_rows");
        positive(grid_cols, "grid_cols");
        positive(patch_symbols, "patch_symbols");
        if (d_model % heads != 0) {
            throw ConfigError("ModelConfig: d_model must be divisible by heads");
        }
        if (mask_token_id >= vocab) {
            throw ConfigError("ModelConfig: mask_token_id must be < vocab");
        }
        if (max_positions < num_patches()) {
            throw ConfigError("ModelConfig: max_positions smaller than patch count");
        }
        if (!(norm_eps > 0.0)) {
            throw ConfigError("ModelConfig: norm_eps must be positive");
        }
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Image as a row-major grid of patch symbols.
struct PatchGrid {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<PatchSymbol> symbols;

    std::size_t size() const noexcept { return rows * cols; }
    PatchSymbol at(std::size_t r, std::size_t c) const { return symbols.at(r * cols + c); }

    friend bool operator==(const PatchGrid&, const PatchGrid&) = default;
};

struct LayerWeights {
    std::vector<double> attn_norm_gain;
    std::vector<double> attn_norm_bias;
    Matrix wq;  // d x d, head h owns columns [h*dh, (h+1)*dh)
    Matrix wk;
    Matrix wv;
    Matrix wo;  // d x d
    std::vector<double> ffn_norm_gain;
    std::vector<double> ffn_norm_bias;
    Matrix ffn_in;   // d x mu
    Matrix ffn_out;  // mu x d

    friend bool operator==(const LayerWeights&, const LayerWeights&) = default;
};

struct ModelWeights {
    ModelConfig config;
    Matrix patch_embed;  // patch_symbols x d_v
    Matrix projector;    // d_v x d
    Matrix token_embed;  // vocab x d
    Matrix positional;   // max_positions x d
    std::vector<LayerWeights> layers;
    std::vector<double> final_norm_gain;
    std::vector<double> final_norm_bias;
    Matrix output_head;  // d x vocab

    friend bool operator==(const ModelWeights&, const ModelWeights&) = default;
};

/// Per-layer, per-head attention maps from one forward pass.
struct AttentionCapture {
    std::size_t layers = 0;
    std::size_t heads = 0;
    std::size_t step_index = 0;
    std::vector<Matrix> maps;  // maps[l * heads + h]

    const Matrix& at(std::size_t layer, std::size_t head) const { return maps.at(layer * heads + head); }
    std::size_t sequence_length() const noexcept { return maps.empty() ? 0 : maps.front().rows(); }
};

enum class CaptureMode {
    None,
    Full,  // every layer/head map
    Mean,  // only the layer/head average, accumulated during the pass
};

struct ForwardResult {
    Matrix logits;
    std::optional<AttentionCapture> attention;
    std::optional<Matrix> mean_attention;
};

namespace detail {

inline void check_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* what) {
    if (m.rows() != rows || m.cols() != cols) {
        throw ShapeError(std::string("model weights: ") + what + " has shape " +
                         std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ", expected " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    }
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

inline void add_positional(Matrix& rows, const ModelWeights& w, std::size_t first_position) {
    if (first_position + rows.rows() > w.positional.rows()) {
        throw RangeError("positional table exhausted: need position " +
                         std::to_string(first_position + rows.rows() - 1));
    }
    for (std::size_t i = 0; i < rows.rows(); ++i) {
        auto dst = rows.row(i);
        auto pos = w.positional.row(first_position + i);
        for (std::size_t j = 0; j < dst.size(); ++j) {
            dst[j] += pos[j];
        }
    }
}

}  // namespace detail

/// Fixed sinusoidal table: even columns sin(pos / 10000^(2i/d)), odd columns cos.
inline Matrix sinusoidal_positions(std::size_t positions, std::size_t d) {
    Matrix table(positions, d);
    for (std::size_t p = 0; p < positions; ++p) {
        for (std::size_t j = 0; j < d; ++j) {
            const double pair = static_cast<double>(j / 2 * 2);
            const double angle = static_cast<double>(p) / std::pow(10000.0, pair / static_cast<double>(d));
            table(p, j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return table;
}

/// Throws ShapeError unless every weight matrix agrees with w.config.
inline void validate_weights(const ModelWeights& w) {
    const ModelConfig& c = w.config;
    c.validate();
    detail::check_shape(w.patch_embed, c.patch_symbols, c.d_vision, "patch_embed");
    detail::check_shape(w.projector, c.d_vision, c.d_model, "projector");
    detail::check_shape(w.token_embed, c.vocab, c.d_model, "token_embed");
    detail::check_shape(w.positional, c.max_positions, c.d_model, "positional");
    detail::check_shape(w.output_head, c.d_model, c.vocab, "output_head");
    if (w.layers.size() != c.layers) {
        throw ShapeError("model weights: layer count mismatch");
    }
    for (const auto& l : w.layers) {
        detail::check_shape(l.wq, c.d_model, c.d_model, "wq");
        detail::check_shape(l.wk, c.d_model, c.d_model, "wk");
        detail::check_shape(l.wv, c.d_model, c.d_model, "wv");
        detail::check_shape(l.wo, c.d_model, c.d_model, "wo");
        detail::check_shape(l.ffn_in, c.d_model, c.ffn_width, "ffn_in");
        detail::check_shape(l.ffn_out, c.ffn_width, c.d_model, "ffn_out");
        for (const auto* v : {&l.attn_norm_gain, &l.attn_norm_bias, &l.ffn_norm_gain, &l.ffn_norm_bias}) {
            if (v->size() != c.d_model) {
                throw ShapeError("model weights: norm parameter length mismatch");
            }
        }
    }
    if (w.final_norm_gain.size() != c.d_model || w.final_norm_bias.size() != c.d_model) {
        throw ShapeError("model weights: final norm length mismatch");
    }
}

/// Projected patch embeddings, one row per patch in row-major order, without
/// positional offsets.
inline Matrix project_patches(const PatchGrid& image, const ModelWeights& w) {
    const ModelConfig& c = w.config;
    if (image.rows != c.grid_rows || image.cols != c.grid_cols || image.symbols.size() != image.size()) {
        throw ShapeError("encode_image: grid is " + std::to_string(image.rows) + "x" +
                         std::to_string(image.cols) + ", model expects " + std::to_string(c.grid_rows) +
                         "x" + std::to_string(c.grid_cols));
    }
    Matrix raw(image.size(), c.d_vision);
    for (std::size_t i = 0; i < image.size(); ++i) {
        const PatchSymbol s = image.symbols[i];
        if (s >= w.patch_embed.rows()) {
            throw RangeError("encode_image: unknown patch symbol " + std::to_string(s));
        }
        auto src = w.patch_embed.row(s);
        std::copy(src.begin(), src.end(), raw.row(i).begin());
    }
    return matmul(raw, w.projector);
}

/// Visual tokens V (N x d): projected patches plus positional offsets 0..N-1.
inline Matrix encode_image(const PatchGrid& image, const ModelWeights& w) {
    Matrix v = project_patches(image, w);
    detail::add_positional(v, w, 0);
    return v;
}

/// Token embeddings plus positional offsets starting at first_position.
inline Matrix embed_tokens(std::span<const TokenId> tokens, const ModelWeights& w, std::size_t first_position) {
    Matrix out(tokens.size(), w.config.d_model);
    for (std::size_t j = 0; j < tokens.size(); ++j) {
        if (tokens[j] >= w.config.vocab) {
            throw RangeError("token id " + std::to_string(tokens[j]) + " out of vocabulary");
        }
        auto src = w.token_embed.row(tokens[j]);
        std::copy(src.begin(), src.end(), out.row(j).begin());
    }
    detail::add_positional(out, w, first_position);
    return out;
}

/// Prompt embeddings T (m x d). Prompt positions follow the N visual positions.
inline Matrix embed_prompt(std::span<const TokenId> tokens, const ModelWeights& w) {
    return embed_tokens(tokens, w, w.config.num_patches());
}

/// Bidirectional pre-norm transformer over x (n x d). Returns n x vocab logits
/// and, depending on `mode`, the attention maps of the pass.
inline ForwardResult forward(const Matrix& x, const ModelWeights& w, CaptureMode mode = CaptureMode::None) {
    const ModelConfig& c = w.config;
    if (x.rows() < 1) {
        throw ShapeError("forward: empty sequence");
    }
    if (x.cols() != c.d_model) {
        throw ShapeError("forward: input width " + std::to_string(x.cols()) + " != d_model " +
                         std::to_string(c.d_model));
    }
    if (w.layers.size() != c.layers) {
        throw ShapeError("forward: layer count mismatch");
    }
    if (!x.is_finite()) {
        throw RangeError("forward: non-finite input");
    }

    const std::size_t n = x.rows();
    const std::size_t dh = c.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const double map_weight = 1.0 / static_cast<double>(c.layers * c.heads);

    ForwardResult result;
    if (mode == CaptureMode::Full) {
        result.attention = AttentionCapture{c.layers, c.heads, 0, {}};
        result.attention->maps.reserve(c.layers * c.heads);
    } else if (mode == CaptureMode::Mean) {
        result.mean_attention = Matrix(n, n);
    }

    Matrix h = x;
    for (const LayerWeights& layer : w.layers) {
        const Matrix a = layer_norm_rows(h, layer.attn_norm_gain, layer.attn_norm_bias, c.norm_eps);
        const Matrix q = matmul(a, layer.wq);
        const Matrix k = matmul(a, layer.wk);
        const Matrix v = matmul(a, layer.wv);
        Matrix heads_out(n, c.d_model);
        for (std::size_t head = 0; head < c.heads; ++head) {
            const std::size_t off = head * dh;
            Matrix scores = matmul(slice_cols(q, off, dh), transpose(slice_cols(k, off, dh)));
            for (double& s : scores.data()) {
                s *= scale;
            }
            Matrix probs = softmax_rows(scores);
            const Matrix out = matmul(probs, slice_cols(v, off, dh));
            for (std::size_t i = 0; i < n; ++i) {
                std::copy(out.row(i).begin(), out.row(i).end(),
                          heads_out.row(i).begin() + static_cast<std::ptrdiff_t>(off));
            }
            if (mode == CaptureMode::Mean) {
                auto acc = result.mean_attention->data();
                auto src = probs.data();
                for (std::size_t i = 0; i < acc.size(); ++i) {
                    acc[i] += map_weight * src[i];
                }
            } else if (mode == CaptureMode::Full) {
                result.attention->maps.push_back(std::move(probs));
            }
        }
        const Matrix attn = matmul(heads_out, layer.wo);
        for (std::size_t i = 0; i < h.data().size(); ++i) {
            h.data()[i] += attn.data()[i];
        }

        const Matrix b = layer_norm_rows(h, layer.ffn_norm_gain, layer.ffn_norm_bias, c.norm_eps);
        Matrix hidden = matmul(b, layer.ffn_in);
        for (double& u : hidden.data()) {
            u = detail::gelu(u);
        }
        const Matrix ffn = matmul(hidden, layer.ffn_out);
        for (std::size_t i = 0; i < h.data().size(); ++i) {
            h.data()[i] += ffn.data()[i];
        }
    }
    const Matrix last = layer_norm_rows(h, w.final_norm_gain, w.final_norm_bias, c.norm_eps);
    result.logits = matmul(last, w.output_head);
    return result;
}

/// Gaussian weights scaled by 1/sqrt(fan_in) so activations stay O(1).
/// Identical (cfg, seed) gives bitwise-identical weights.
inline ModelWeights init_random_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    SeededRng rng(seed);
    auto gaussian = [&rng](std::size_t rows, std::size_t cols, double stddev) {
        Matrix m(rows, cols);
        for (double& v : m.data()) {
            v = stddev * rng.normal();
        }
        return m;
    };
    const std::size_t d = cfg.d_model;
    const double inv_d = 1.0 / std::sqrt(static_cast<double>(d));

    ModelWeights w;
    w.config = cfg;
    w.patch_embed = gaussian(cfg.patch_symbols, cfg.d_vision, 1.0);
    w.projector = gaussian(cfg.d_vision, d, 1.0 / std::sqrt(static_cast<double>(cfg.d_vision)));
    w.token_embed = gaussian(cfg.vocab, d, 1.0);
    w.positional = sinusoidal_positions(cfg.max_positions, d);
    w.layers.reserve(cfg.layers);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        LayerWeights layer;
        layer.attn_norm_gain.assign(d, 1.0);
        layer.attn_norm_bias.assign(d, 0.0);
        layer.wq = gaussian(d, d, inv_d);
        layer.wk = gaussian(d, d, inv_d);
        layer.wv = gaussian(d, d, inv_d);
        layer.wo = gaussian(d, d, inv_d);
        layer.ffn_norm_gain.assign(d, 1.0);
        layer.ffn_norm_bias.assign(d, 0.0);
        layer.ffn_in = gaussian(d, cfg.ffn_width, inv_d);
        layer.ffn_out = gaussian(cfg.ffn_width, d, 1.0 / std::sqrt(static_cast<double>(cfg.ffn_width)));
        w.layers.push_back(std::move(layer));
    }
    w.final_norm_gain.assign(d, 1.0);
    w.final_norm_bias.assign(d, 0.0);
    w.output_head = gaussian(d, cfg.vocab, inv_d);
    return w;
}

// ---------------------------------------------------------------------------
// Pointer-copy model
// ---------------------------------------------------------------------------

/// Vocabulary layout shared by the copy model and the pointer-task generator:
/// [0, S) answer symbols, [S, S+N) patch-index tokens, S+N "unknown", S+N+1 mask.
struct PointerVocab {
    std::size_t symbols = 0;
    std::size_t patches = 0;

    TokenId symbol_token(PatchSymbol s) const { return static_cast<TokenId>(s); }
    TokenId index_token(std::size_t patch) const { return static_cast<TokenId>(symbols + patch); }
    TokenId unknown_token() const { return static_cast<TokenId>(symbols + patches); }
    TokenId mask_token() const { return static_cast<TokenId>(symbols + patches + 1); }
    std::size_t vocab_size() const { return symbols + patches + 2; }
};

/// Layers needed for the copy model's layer/head-averaged masked-row
/// attention on the target patch to exceed 0.9: one routing layer plus copy layers.
inline constexpr std::size_t kCopyModelLayers = 12;

/// Smallest model configuration able to host the copy construction for a
/// rows x cols grid over `symbols` patch symbols.
inline ModelConfig copy_model_config(std::size_t rows, std::size_t cols, std::size_t symbols,
                                     std::size_t heads = 1) {
    ModelConfig c;
    c.layers = kCopyModelLayers;
    c.heads = heads;
    const std::size_t needed = 4 * symbols + 24;
    const std::size_t min_head = std::max<std::size_t>(5, symbols);
    std::size_t dh = std::max(min_head, (needed + heads - 1) / heads);
    c.d_model = dh * heads;
    c.d_vision = symbols + 1;
    c.ffn_width = 4;
    c.grid_rows = rows;
    c.grid_cols = cols;
    c.patch_symbols = symbols;
    const PointerVocab vocab{symbols, rows * cols};
    c.vocab = vocab.vocab_size();
    c.mask_token_id = vocab.mask_token();
    c.max_positions = rows * cols + 512;
    return c;
}

/// Hand-built weights in which every masked response row attends to the
/// visual token named by the prompt's index token and decodes its symbol.
///
/// Residual channels come in mirrored pairs (+v at c, -v at c + base) so every
/// row has zero mean, and a large constant anchor pair dominates every row
/// norm; pre-norm LayerNorm therefore acts as a near-constant scale.
///
/// Layer 0 routes the prompt's index code into masked rows. Layers 1..L-1 match
/// that code against the 2D sinusoidal position code of each visual token and
/// copy the matched patch symbol into answer channels. The prompt token also
/// exposes a "sink" key slightly weaker than an exact match, so a masked row
/// whose target patch has been pruned reads nothing and decodes "unknown".
/// A slot channel nudges later response slots to higher confidence.
inline ModelWeights build_copy_model(const ModelConfig& cfg, std::size_t patch_symbols) {
    cfg.validate();
    const std::size_t S = patch_symbols;
    const std::size_t N = cfg.num_patches();
    const PointerVocab vocab{S, N};
    const std::size_t base = 2 * S + 12;
    const std::size_t d = cfg.d_model;
    const std::size_t H = cfg.heads;
    const std::size_t dh = cfg.head_dim();

    if (S < 1) {
        throw ConfigError("build_copy_model: need at least one patch symbol");
    }
    if (cfg.layers < 2) {
        throw ConfigError("build_copy_model: needs a routing layer and at least one copy layer");
    }
    if (d < 2 * base || dh < std::max<std::size_t>(5, S)) {
        throw ConfigError("build_copy_model: d_model/head width too small for the construction");
    }
    if (cfg.d_vision < S + 1 || cfg.patch_symbols < S) {
        throw ConfigError("build_copy_model: vision width or patch table too small");
    }
    if (cfg.vocab < vocab.vocab_size() || cfg.mask_token_id <= vocab.unknown_token()) {
        throw ConfigError("build_copy_model: vocabulary cannot host symbols, index tokens, unknown and mask");
    }
    if (cfg.max_positions <= N + 1) {
        throw ConfigError("build_copy_model: max_positions too small");
    }

    // Channel layout (base channels; mirror of channel ch is ch + base).
    const std::size_t content = 0;
    const std::size_t answer = S;
    const std::size_t pos_code = 2 * S;
    const std::size_t query_code = 2 * S + 4;
    const std::size_t mask_marker = 2 * S + 8;
    const std::size_t prompt_marker = 2 * S + 9;
    const std::size_t slot = 2 * S + 10;
    const std::size_t anchor = 2 * S + 11;

    constexpr double kAnchor = 1.0e4;
    constexpr double kRouteLogit = 30.0;
    constexpr double kMatchMargin = 25.0;
    constexpr double kTargetLogit = 4.0;
    constexpr double kUnknownLogit = 2.0;
    constexpr double kSlotStep = 0.02;

    const double ln_scale = std::sqrt(static_cast<double>(d) / 2.0) / kAnchor;
    const double sqrt_dh = std::sqrt(static_cast<double>(dh));
    const std::size_t longest = std::max(cfg.grid_rows, cfg.grid_cols);
    const double gap = longest >= 2 ? 1.0 - std::cos(2.0 * std::numbers::pi / static_cast<double>(longest)) : 1.0;
    const double match_gain = 2.0 * kMatchMargin / gap;  // logit per unit code dot product

    auto put = [base](std::span<double> row, std::size_t ch, double v) {
        row[ch] += v;
        row[ch + base] -= v;
    };
    auto grid_code = [&](std::size_t patch) {
        const double r = static_cast<double>(patch / cfg.grid_cols);
        const double col = static_cast<double>(patch % cfg.grid_cols);
        const double tr = 2.0 * std::numbers::pi * r / static_cast<double>(cfg.grid_rows);
        const double tc = 2.0 * std::numbers::pi * col / static_cast<double>(cfg.grid_cols);
        return std::array<double, 4>{std::cos(tr), std::sin(tr), std::cos(tc), std::sin(tc)};
    };
    auto read = [&](Matrix& wmat, std::size_t ch, std::size_t j, double v) {
        for (std::size_t h = 0; h < H; ++h) {
            wmat(ch, h * dh + j) = v;
        }
    };
    auto write = [&](Matrix& wmat, std::size_t j, std::size_t ch, double v) {
        for (std::size_t h = 0; h < H; ++h) {
            wmat(h * dh + j, ch) = v / static_cast<double>(H);
            wmat(h * dh + j, ch + base) = -v / static_cast<double>(H);
        }
    };

    ModelWeights w;
    w.config = cfg;

    w.patch_embed = Matrix(cfg.patch_symbols, cfg.d_vision);
    for (std::size_t s = 0; s < cfg.patch_symbols; ++s) {
        if (s < S) {
            w.patch_embed(s, s) = 1.0;
        }
        w.patch_embed(s, S) = 1.0;
    }
    w.projector = Matrix(cfg.d_vision, d);
    for (std::size_t s = 0; s < S; ++s) {
        put(w.projector.row(s), content + s, 1.0);
    }
    put(w.projector.row(S), anchor, kAnchor);

    w.token_embed = Matrix(cfg.vocab, d);
    for (std::size_t t = 0; t < cfg.vocab; ++t) {
        put(w.token_embed.row(t), anchor, kAnchor);
    }
    for (std::size_t s = 0; s < S; ++s) {
        put(w.token_embed.row(vocab.symbol_token(static_cast<PatchSymbol>(s))), content + s, 1.0);
    }
    for (std::size_t i = 0; i < N; ++i) {
        auto row = w.token_embed.row(vocab.index_token(i));
        put(row, prompt_marker, 1.0);
        const auto code = grid_code(i);
        for (std::size_t j = 0; j < 4; ++j) {
            put(row, query_code + j, code[j]);
        }
    }
    put(w.token_embed.row(cfg.mask_token_id), mask_marker, 1.0);

    w.positional = Matrix(cfg.max_positions, d);
    for (std::size_t p = 0; p < N; ++p) {
        const auto code = grid_code(p);
        for (std::size_t j = 0; j < 4; ++j) {
            put(w.positional.row(p), pos_code + j, code[j]);
        }
    }
    for (std::size_t p = N + 1; p < cfg.max_positions; ++p) {
        put(w.positional.row(p), slot, static_cast<double>(p - N));
    }

    w.layers.resize(cfg.layers);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        LayerWeights& layer = w.layers[l];
        layer.attn_norm_gain.assign(d, 1.0);
        layer.attn_norm_bias.assign(d, 0.0);
        layer.ffn_norm_gain.assign(d, 1.0);
        layer.ffn_norm_bias.assign(d, 0.0);
        layer.wq = Matrix(d, d);
        layer.wk = Matrix(d, d);
        layer.wv = Matrix(d, d);
        layer.wo = Matrix(d, d);
        layer.ffn_in = Matrix(d, cfg.ffn_width);
        layer.ffn_out = Matrix(cfg.ffn_width, d);
        if (l == 0) {
            const double g = std::sqrt(kRouteLogit * sqrt_dh) / ln_scale;
            read(layer.wq, mask_marker, 0, g);
            read(layer.wk, prompt_marker, 0, g);
            for (std::size_t j = 0; j < 4; ++j) {
                read(layer.wv, query_code + j, j, 1.0 / ln_scale);
                write(layer.wo, j, query_code + j, 1.0);
            }
        } else {
            for (std::size_t j = 0; j < 4; ++j) {
                read(layer.wq, query_code + j, j, match_gain * sqrt_dh / ln_scale);
                read(layer.wk, pos_code + j, j, 1.0 / ln_scale);
            }
            const double sink_logit = (2.0 - gap / 2.0) * match_gain;
            read(layer.wq, mask_marker, 4, sink_logit * sqrt_dh / ln_scale);
            read(layer.wk, prompt_marker, 4, 1.0 / ln_scale);
            for (std::size_t s = 0; s < S; ++s) {
                read(layer.wv, content + s, s, 1.0 / ln_scale);
                write(layer.wo, s, answer + s, 1.0);
            }
        }
    }
    w.final_norm_gain.assign(d, 1.0);
    w.final_norm_bias.assign(d, 0.0);

    const double copies = static_cast<double>(cfg.layers - 1);
    w.output_head = Matrix(d, cfg.vocab);
    for (std::size_t s = 0; s < S; ++s) {
        w.output_head(answer + s, vocab.symbol_token(static_cast<PatchSymbol>(s))) =
            kTargetLogit / (copies * ln_scale);
        w.output_head(slot, vocab.symbol_token(static_cast<PatchSymbol>(s))) = kSlotStep / ln_scale;
    }
    w.output_head(mask_marker, vocab.unknown_token()) = kUnknownLogit / ln_scale;
    return w;
}

}  // namespace maskprune
