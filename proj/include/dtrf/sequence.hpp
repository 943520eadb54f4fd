// Builds the aligned (S, P, Q) input triples: control tokens around the
// source and summary, positions that reset to zero at the summary
// boundary, and per-token segment labels.
#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "dtrf/common.hpp"
#include "dtrf/tokenizer.hpp"

namespace dtrf {

constexpr int kSegSource = 0;   // sigma
constexpr int kSegSummary = 1;  // tau

struct SequenceLimits {
    std::size_t max_source_tokens = 400;
    std::size_t max_summary_tokens = 100;
    std::size_t n_ctx = 128;
    // The terminal token's position continues the summary run by default;
    // this flag instead resets it to zero.
    bool literal_delta_position = false;
};

struct EncodedTriple {
    TokenSeq S;
    std::vector<int> P;
    std::vector<int> Q;
    std::size_t summary_start = 0;       // index of beta
    std::size_t summary_token_count = 0; // summary tokens, excluding beta and delta
};

namespace detail {

inline TokenSeq truncated(const TokenSeq& x, std::size_t limit) {
    if (x.size() <= limit) {
        return x;
    }
    return TokenSeq(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(limit));
}

}  // namespace detail

// S = [alpha, x..., beta, y..., delta]. Positions run 0..|x| over the
// source side, reset to 0 at beta, run 1..|y| over the summary, and give
// delta position |y|+1 (or 0 under literal_delta_position). The source is
// truncated from the right, never the summary, if the triple would exceed
// the context.
inline EncodedTriple build_training_triple(const TokenSeq& x, const TokenSeq& y,
                                           const SequenceLimits& limits,
                                           const ControlTokens& controls = ControlTokens{}) {
    TokenSeq src = detail::truncated(x, limits.max_source_tokens);
    const TokenSeq sum = detail::truncated(y, limits.max_summary_tokens);
    if (sum.empty()) {
        throw DataError("build_training_triple: empty summary");
    }
    if (sum.size() + 3 > limits.n_ctx) {
        throw DataError("build_training_triple: summary of " + std::to_string(sum.size()) +
                        " tokens cannot fit a context of " + std::to_string(limits.n_ctx));
    }
    const std::size_t source_budget = limits.n_ctx - sum.size() - 3;
    if (src.size() > source_budget) {
        src.resize(source_budget);
    }
    if (src.empty()) {
        throw DataError("build_training_triple: empty source");
    }

    EncodedTriple t;
    const std::size_t total = src.size() + sum.size() + 3;
    t.S.reserve(total);
    t.P.reserve(total);
    t.Q.reserve(total);

    t.S.push_back(controls.alpha);
    t.S.insert(t.S.end(), src.begin(), src.end());
    t.S.push_back(controls.beta);
    t.S.insert(t.S.end(), sum.begin(), sum.end());
    t.S.push_back(controls.delta);

    for (std::size_t i = 0; i <= src.size(); ++i) {
        t.P.push_back(static_cast<int>(i));
    }
    for (std::size_t i = 0; i <= sum.size(); ++i) {
        t.P.push_back(static_cast<int>(i));
    }
    t.P.push_back(limits.literal_delta_position ? 0 : static_cast<int>(sum.size() + 1));

    t.Q.assign(src.size() + 1, kSegSource);
    t.Q.insert(t.Q.end(), sum.size() + 2, kSegSummary);

    t.summary_start = src.size() + 1;
    t.summary_token_count = sum.size();
    return t;
}

// S = [alpha, x..., beta] with beta at reset position 0. Decoding appends
// tokens with positions 1, 2, ... and segment tau, so the source is
// truncated far enough to leave max_summary_tokens of headroom. When even
// an empty source could not host the full budget, the headroom shrinks to
// the most the context can hold while keeping one source token.
inline EncodedTriple build_inference_prefix(const TokenSeq& x, const SequenceLimits& limits,
                                            const ControlTokens& controls = ControlTokens{}) {
    TokenSeq src = detail::truncated(x, limits.max_source_tokens);
    if (limits.n_ctx < 4) {
        throw ConfigError("build_inference_prefix: context of " + std::to_string(limits.n_ctx) +
                          " cannot hold a prefix and a summary");
    }
    const std::size_t headroom = std::min(limits.max_summary_tokens, limits.n_ctx - 3);
    const std::size_t source_budget = limits.n_ctx - headroom - 2;
    if (src.size() > source_budget) {
        src.resize(source_budget);
    }
    if (src.empty()) {
        throw DataError("build_inference_prefix: empty source");
    }

    EncodedTriple t;
    t.S.push_back(controls.alpha);
    t.S.insert(t.S.end(), src.begin(), src.end());
    t.S.push_back(controls.beta);
    for (std::size_t i = 0; i <= src.size(); ++i) {
        t.P.push_back(static_cast<int>(i));
    }
    t.P.push_back(0);
    t.Q.assign(src.size() + 1, kSegSource);
    t.Q.push_back(kSegSummary);
    t.summary_start = src.size() + 1;
    t.summary_token_count = 0;
    return t;
}

}  // namespace dtrf
