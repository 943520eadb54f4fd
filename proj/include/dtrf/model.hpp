// Decoder-only transformer: token + position + segment embeddings, pre-LN
// blocks with causal multi-head attention and a GELU MLP, a final layer
// norm, and the token embedding reused as the output projection. There is
// no separate output matrix anywhere.
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "dtrf/common.hpp"
#include "dtrf/ops.hpp"
#include "dtrf/sequence.hpp"
#include "dtrf/tensor.hpp"

namespace dtrf {

struct ModelConfig {
    std::size_t n_layers = 2;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t vocab_size = 2000;
    std::size_t n_ctx = 128;
    bool use_segment_embedding = true;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_layers == 0 || d_model == 0 || n_heads == 0) {
            throw ConfigError("model config: layers, width and heads must be positive");
        }
        if (d_model % n_heads != 0) {
            throw ConfigError("model config: d_model " + std::to_string(d_model) +
                              " not divisible by n_heads " + std::to_string(n_heads));
        }
        if (n_ctx < 8) {
            throw ConfigError("model config: n_ctx must be at least 8, got " +
                              std::to_string(n_ctx));
        }
        if (vocab_size <= Vocabulary::kNumSpecial) {
            throw ConfigError("model config: vocab_size " + std::to_string(vocab_size) +
                              " leaves no room beyond the control tokens");
        }
    }

    bool operator==(const ModelConfig&) const = default;
};

template <typename Real>
struct ModelParams {
    ModelConfig config;
    // Insertion order is the canonical parameter order: initialization
    // draws, optimizer state and checkpoints all follow it.
    std::vector<std::pair<std::string, TensorPtr<Real>>> named;

    TensorPtr<Real>& find(const std::string& name) {
        for (auto& [n, t] : named) {
            if (n == name) {
                return t;
            }
        }
        throw InternalError("model params: no tensor named " + name);
    }
    const TensorPtr<Real>& find(const std::string& name) const {
        for (const auto& [n, t] : named) {
            if (n == name) {
                return t;
            }
        }
        throw InternalError("model params: no tensor named " + name);
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& [name, t] : named) {
            n += t->size();
        }
        return n;
    }

    // Deep copy; fresh tensors, no shared graph state.
    ModelParams clone() const {
        ModelParams out;
        out.config = config;
        for (const auto& [name, t] : named) {
            out.named.emplace_back(name, parameter<Real>(t->shape, t->data));
        }
        return out;
    }
};

namespace detail {

inline std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& c) {
    const std::size_t d = c.d_model;
    std::vector<std::pair<std::string, Shape>> layout;
    layout.emplace_back("w_e", Shape{d, c.vocab_size});
    layout.emplace_back("w_p", Shape{d, c.n_ctx});
    if (c.use_segment_embedding) {
        layout.emplace_back("w_q", Shape{d, 2});
    }
    for (std::size_t b = 0; b < c.n_layers; ++b) {
        const std::string p = "block" + std::to_string(b) + ".";
        layout.emplace_back(p + "ln1.gain", Shape{1, d});
        layout.emplace_back(p + "ln1.bias", Shape{1, d});
        layout.emplace_back(p + "attn.w_q", Shape{d, d});
        layout.emplace_back(p + "attn.w_k", Shape{d, d});
        layout.emplace_back(p + "attn.w_v", Shape{d, d});
        layout.emplace_back(p + "attn.w_o", Shape{d, d});
        layout.emplace_back(p + "attn.b_q", Shape{1, d});
        layout.emplace_back(p + "attn.b_k", Shape{1, d});
        layout.emplace_back(p + "attn.b_v", Shape{1, d});
        layout.emplace_back(p + "attn.b_o", Shape{1, d});
        layout.emplace_back(p + "ln2.gain", Shape{1, d});
        layout.emplace_back(p + "ln2.bias", Shape{1, d});
        layout.emplace_back(p + "mlp.w_in", Shape{d, 4 * d});
        layout.emplace_back(p + "mlp.b_in", Shape{1, 4 * d});
        layout.emplace_back(p + "mlp.w_out", Shape{4 * d, d});
        layout.emplace_back(p + "mlp.b_out", Shape{1, d});
    }
    layout.emplace_back("ln_f.gain", Shape{1, d});
    layout.emplace_back("ln_f.bias", Shape{1, d});
    return layout;
}

inline bool is_gain(const std::string& name) {
    return name.size() >= 4 && name.compare(name.size() - 4, 4, "gain") == 0;
}

inline bool is_bias(const std::string& name) {
    return (name.size() >= 4 && name.compare(name.size() - 4, 4, "bias") == 0) ||
           name.find(".b_") != std::string::npos;
}

}  // namespace detail

// Weight matrices ~ Normal(0, 0.02^2), layer norm gains 1, biases 0.
// Deterministic: the draw order is the parameter layout order.
template <typename Real>
ModelParams<Real> init_params(const ModelConfig& config) {
    config.validate();
    SeededRng rng(config.seed);
    ModelParams<Real> params;
    params.config = config;
    for (const auto& [name, shape] : detail::parameter_layout(config)) {
        if (detail::is_gain(name)) {
            params.named.emplace_back(name, parameter_filled<Real>(shape, Real(1)));
        } else if (detail::is_bias(name)) {
            params.named.emplace_back(name, parameter_filled<Real>(shape, Real(0)));
        } else {
            params.named.emplace_back(name, randn_parameter<Real>(shape, Real(0.02), rng));
        }
    }
    return params;
}

namespace detail {

template <typename Real>
void validate_inputs(const ModelParams<Real>& params, const TokenSeq& S,
                     const std::vector<int>& P, const std::vector<int>& Q) {
    const ModelConfig& c = params.config;
    if (S.size() != P.size() || S.size() != Q.size()) {
        throw ShapeError("model input: S/P/Q lengths disagree: " + std::to_string(S.size()) +
                         "/" + std::to_string(P.size()) + "/" + std::to_string(Q.size()));
    }
    if (S.empty() || S.size() > c.n_ctx) {
        throw ShapeError("model input: length " + std::to_string(S.size()) +
                         " outside [1, " + std::to_string(c.n_ctx) + "]");
    }
    for (int s : S) {
        if (s < 0 || static_cast<std::size_t>(s) >= c.vocab_size) {
            throw DataError("model input: token id " + std::to_string(s) +
                            " outside vocabulary of size " + std::to_string(c.vocab_size));
        }
    }
    for (int p : P) {
        if (p < 0 || static_cast<std::size_t>(p) >= c.n_ctx) {
            throw ShapeError("model input: position " + std::to_string(p) +
                             " outside context of " + std::to_string(c.n_ctx));
        }
    }
    for (int q : Q) {
        if (q != kSegSource && q != kSegSummary) {
            throw DataError("model input: segment label " + std::to_string(q) +
                            " is neither source nor summary");
        }
    }
}

}  // namespace detail

// H0 = W_E S + W_P P + W_Q Q, one column per input token (d x len). The
// segment term is omitted when the segment embedding is disabled.
template <typename Real>
TensorPtr<Real> embed_graph(const ModelParams<Real>& params, const TokenSeq& S,
                            const std::vector<int>& P, const std::vector<int>& Q) {
    detail::validate_inputs(params, S, P, Q);
    auto h = add(gather_cols(params.find("w_e"), S), gather_cols(params.find("w_p"), P));
    if (params.config.use_segment_embedding) {
        h = add(h, gather_cols(params.find("w_q"), Q));
    }
    return h;
}

template <typename Real>
Tensor<Real> embed(const ModelParams<Real>& params, const TokenSeq& S, const std::vector<int>& P,
                   const std::vector<int>& Q) {
    auto node = embed_graph(params, S, P, Q);
    return Tensor<Real>(node->shape, node->data);
}

// Full stack up to the tied projection. Returns logits with one row per
// position (len x V): row j scores the token at position j+1.
template <typename Real>
TensorPtr<Real> forward_logits(const ModelParams<Real>& params, const TokenSeq& S,
                               const std::vector<int>& P, const std::vector<int>& Q) {
    const ModelConfig& c = params.config;
    const std::size_t n = S.size();
    const std::size_t head_dim = c.d_model / c.n_heads;
    const Real scaling = Real(1) / std::sqrt(static_cast<Real>(head_dim));

    auto h = transpose(embed_graph(params, S, P, Q));  // n x d, rows are positions
    auto mask = causal_mask<Real>(n);

    for (std::size_t b = 0; b < c.n_layers; ++b) {
        const std::string p = "block" + std::to_string(b) + ".";
        // x + Attn(LN(x))
        auto a = layer_norm(h, params.find(p + "ln1.gain"), params.find(p + "ln1.bias"));
        auto q = add_bias(matmul(a, params.find(p + "attn.w_q")), params.find(p + "attn.b_q"));
        auto k = add_bias(matmul(a, params.find(p + "attn.w_k")), params.find(p + "attn.b_k"));
        auto v = add_bias(matmul(a, params.find(p + "attn.w_v")), params.find(p + "attn.b_v"));
        std::vector<TensorPtr<Real>> heads;
        heads.reserve(c.n_heads);
        for (std::size_t hd = 0; hd < c.n_heads; ++hd) {
            const std::size_t c0 = hd * head_dim, c1 = (hd + 1) * head_dim;
            auto qh = slice_cols(q, c0, c1);
            auto kh = slice_cols(k, c0, c1);
            auto vh = slice_cols(v, c0, c1);
            auto scores = scale(matmul(qh, transpose(kh)), scaling);
            auto weights = softmax_rows(add(scores, mask));
            heads.push_back(matmul(weights, vh));
        }
        auto attn = concat(heads, 1);
        h = add(h, add_bias(matmul(attn, params.find(p + "attn.w_o")),
                            params.find(p + "attn.b_o")));
        // x + MLP(LN(x))
        auto m = layer_norm(h, params.find(p + "ln2.gain"), params.find(p + "ln2.bias"));
        auto inner = gelu(add_bias(matmul(m, params.find(p + "mlp.w_in")),
                                   params.find(p + "mlp.b_in")));
        h = add(h, add_bias(matmul(inner, params.find(p + "mlp.w_out")),
                            params.find(p + "mlp.b_out")));
    }
    auto hf = layer_norm(h, params.find("ln_f.gain"), params.find("ln_f.bias"));
    return matmul(hf, params.find("w_e"));  // n x V, shares w_e with the input embedding
}

// Next-token distributions, one column per position (V x len); column j
// is the distribution over the token at position j+1. Strictly causal.
template <typename Real>
Tensor<Real> forward(const ModelParams<Real>& params, const TokenSeq& S,
                     const std::vector<int>& P, const std::vector<int>& Q) {
    auto probs = transpose(softmax_rows(forward_logits(params, S, P, Q)));
    return Tensor<Real>(probs->shape, probs->data);
}

// Distribution over the token following the last input position.
template <typename Real>
std::vector<Real> next_token_distribution(const ModelParams<Real>& params, const TokenSeq& S,
                                          const std::vector<int>& P, const std::vector<int>& Q) {
    auto logits = forward_logits(params, S, P, Q);
    const std::size_t n = logits->rows(), v = logits->cols();
    std::vector<Real> row(logits->data.begin() + static_cast<std::ptrdiff_t>((n - 1) * v),
                          logits->data.end());
    Real mx = row[0];
    for (Real x : row) {
        mx = std::max(mx, x);
    }
    Real sum(0);
    for (Real& x : row) {
        x = std::exp(x - mx);
        sum += x;
    }
    for (Real& x : row) {
        x /= sum;
    }
    return row;
}

// ----- checkpoint format -----
// Binary: the bytes "dtrf-ckpt v1\n", the config as little-endian fields,
// then a tensor count and (name, shape, float32 data) per parameter in
// canonical order. Loading validates every expected name and shape.

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
    write_u32(out, static_cast<std::uint32_t>(v));
    write_u32(out, static_cast<std::uint32_t>(v >> 32));
}

inline std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) {
        throw DataError("checkpoint: truncated file");
    }
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

inline std::uint64_t read_u64(std::istream& in) {
    const std::uint64_t lo = read_u32(in);
    const std::uint64_t hi = read_u32(in);
    return lo | (hi << 32);
}

inline void write_f32(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(out, bits);
}

inline float read_f32(std::istream& in) {
    const std::uint32_t bits = read_u32(in);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

constexpr char kCheckpointMagic[] = "dtrf-ckpt v1\n";

}  // namespace detail

template <typename Real>
void save_checkpoint(const std::string& path, const ModelParams<Real>& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write checkpoint: " + path);
    }
    out.write(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic) - 1);
    const ModelConfig& c = params.config;
    detail::write_u32(out, static_cast<std::uint32_t>(c.n_layers));
    detail::write_u32(out, static_cast<std::uint32_t>(c.d_model));
    detail::write_u32(out, static_cast<std::uint32_t>(c.n_heads));
    detail::write_u32(out, static_cast<std::uint32_t>(c.vocab_size));
    detail::write_u32(out, static_cast<std::uint32_t>(c.n_ctx));
    detail::write_u32(out, c.use_segment_embedding ? 1 : 0);
    detail::write_u64(out, c.seed);
    detail::write_u32(out, static_cast<std::uint32_t>(params.named.size()));
    for (const auto& [name, t] : params.named) {
        detail::write_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_u32(out, static_cast<std::uint32_t>(t->shape.size()));
        for (std::size_t d : t->shape) {
            detail::write_u32(out, static_cast<std::uint32_t>(d));
        }
        for (Real x : t->data) {
            detail::write_f32(out, static_cast<float>(x));
        }
    }
    if (!out) {
        throw IoError("failed writing checkpoint: " + path);
    }
}

template <typename Real>
ModelParams<Real> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open checkpoint: " + path);
    }
    char magic[sizeof(detail::kCheckpointMagic) - 1];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, detail::kCheckpointMagic, sizeof(magic)) != 0) {
        throw DataError("checkpoint: bad magic in " + path);
    }
    ModelConfig c;
    c.n_layers = detail::read_u32(in);
    c.d_model = detail::read_u32(in);
    c.n_heads = detail::read_u32(in);
    c.vocab_size = detail::read_u32(in);
    c.n_ctx = detail::read_u32(in);
    c.use_segment_embedding = detail::read_u32(in) != 0;
    c.seed = detail::read_u64(in);
    c.validate();

    const auto layout = detail::parameter_layout(c);
    const std::uint32_t count = detail::read_u32(in);
    if (count != layout.size()) {
        throw DataError("checkpoint: expected " + std::to_string(layout.size()) +
                        " tensors, found " + std::to_string(count));
    }
    ModelParams<Real> params;
    params.config = c;
    for (const auto& [expected_name, expected_shape] : layout) {
        const std::uint32_t name_len = detail::read_u32(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in || name != expected_name) {
            throw DataError("checkpoint: expected tensor '" + expected_name + "', found '" +
                            name + "'");
        }
        const std::uint32_t rank = detail::read_u32(in);
        Shape shape(rank);
        for (auto& d : shape) {
            d = detail::read_u32(in);
        }
        if (shape != expected_shape) {
            throw DataError("checkpoint: tensor '" + name + "' has shape " + shape_str(shape) +
                            ", expected " + shape_str(expected_shape));
        }
        std::vector<Real> data(shape_numel(shape));
        for (Real& x : data) {
            x = static_cast<Real>(detail::read_f32(in));
        }
        params.named.emplace_back(name, parameter<Real>(shape, std::move(data)));
    }
    return params;
}

}  // namespace dtrf
