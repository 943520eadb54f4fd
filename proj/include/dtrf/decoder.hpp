// Greedy decoding and nucleus sampling with length-normalized NLL
// reranking. Candidate log-probabilities always come from the unfiltered
// model distribution; the nucleus only restricts what gets sampled.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "dtrf/common.hpp"
#include "dtrf/model.hpp"
#include "dtrf/sequence.hpp"

namespace dtrf {

enum class DecodeMode { greedy, nucleus };

struct DecodeConfig {
    DecodeMode mode = DecodeMode::greedy;
    double p = 0.3;
    std::size_t n_candidates = 5;
    std::size_t max_summary_tokens = 100;
    double length_norm_power = 0.6;
    std::uint64_t seed = 0;

    void validate() const {
        if (p <= 0.0 || p > 1.0) {
            throw ConfigError("decode config: p must lie in (0, 1], got " + std::to_string(p));
        }
        if (n_candidates == 0 || max_summary_tokens == 0) {
            throw ConfigError("decode config: n_candidates and max_summary_tokens must be positive");
        }
    }
};

struct Candidate {
    // Generated summary tokens; the terminal token is excluded from the
    // text but its log-probability is included in the score.
    TokenSeq tokens;
    std::vector<double> token_logprobs;
    double score = 0.0;
    bool truncated = false;  // ran out of context or budget before delta
    // Diagnostic: nucleus support size at each step (empty for greedy).
    std::vector<std::size_t> nucleus_support_sizes;
};

// -(sum of logprobs) / k^0.6 with k the number of generated summary
// tokens excluding the terminal; lower is better. An empty summary scores
// +infinity so it can never win the rerank.
inline double score_candidate(const Candidate& c, const DecodeConfig& config) {
    const std::size_t k = c.tokens.size();
    if (k == 0) {
        return std::numeric_limits<double>::infinity();
    }
    double sum = 0.0;
    for (double lp : c.token_logprobs) {
        sum += lp;
    }
    return -sum / std::pow(static_cast<double>(k), config.length_norm_power);
}

// Smallest descending-probability prefix with cumulative mass >= p,
// renormalized. Ties at the boundary keep the smaller token id, so the
// support is deterministic.
struct NucleusEntry {
    int token;
    double prob;  // renormalized
};

inline std::vector<NucleusEntry> nucleus_filter(const std::vector<double>& probs, double p) {
    std::vector<int> order(probs.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = static_cast<int>(i);
    }
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (probs[a] != probs[b]) {
            return probs[a] > probs[b];
        }
        return a < b;
    });
    std::vector<NucleusEntry> kept;
    double mass = 0.0;
    for (int id : order) {
        kept.push_back({id, probs[id]});
        mass += probs[id];
        if (mass >= p) {
            break;
        }
    }
    for (auto& e : kept) {
        e.prob /= mass;
    }
    return kept;
}

namespace detail {

template <typename Real>
std::vector<double> next_distribution_double(const ModelParams<Real>& params, const TokenSeq& S,
                                             const std::vector<int>& P,
                                             const std::vector<int>& Q) {
    const std::vector<Real> probs = next_token_distribution(params, S, P, Q);
    return std::vector<double>(probs.begin(), probs.end());
}

inline int argmax_token(const std::vector<double>& probs) {
    int best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i) {
        if (probs[i] > probs[best]) {
            best = static_cast<int>(i);
        }
    }
    return best;
}

// Shared decode loop; pick_token chooses the next token from the full
// distribution and may record diagnostics on the candidate.
template <typename Real, typename PickToken>
Candidate decode_loop(const ModelParams<Real>& params, const EncodedTriple& prefix,
                      const DecodeConfig& config, const ControlTokens& controls,
                      PickToken&& pick_token) {
    config.validate();
    if (prefix.S.empty() || prefix.S.back() != controls.beta) {
        throw DataError("decode: prefix must end at the summary-start token");
    }
    Candidate cand;
    TokenSeq S = prefix.S;
    std::vector<int> P = prefix.P;
    std::vector<int> Q = prefix.Q;
    const std::size_t n_ctx = params.config.n_ctx;

    while (cand.tokens.size() < config.max_summary_tokens) {
        if (S.size() >= n_ctx) {
            cand.truncated = true;  // context exhausted before the terminal
            break;
        }
        const std::vector<double> probs = detail::next_distribution_double(params, S, P, Q);
        const int token = pick_token(probs, cand);
        cand.token_logprobs.push_back(std::log(probs[static_cast<std::size_t>(token)]));
        if (token == controls.delta) {
            break;
        }
        cand.tokens.push_back(token);
        S.push_back(token);
        P.push_back(static_cast<int>(cand.tokens.size()));
        Q.push_back(kSegSummary);
        if (cand.tokens.size() == config.max_summary_tokens) {
            cand.truncated = true;  // budget exhausted before the terminal
        }
    }
    cand.score = score_candidate(cand, config);
    return cand;
}

}  // namespace detail

// Argmax at every step; deterministic. Stops at the terminal token or the
// summary budget.
template <typename Real>
Candidate greedy_decode(const ModelParams<Real>& params, const EncodedTriple& prefix,
                        const DecodeConfig& config,
                        const ControlTokens& controls = ControlTokens{}) {
    return detail::decode_loop(params, prefix, config, controls,
                               [](const std::vector<double>& probs, Candidate&) {
                                   return detail::argmax_token(probs);
                               });
}

// Samples each step from the nucleus of the model distribution. The
// recorded log-probabilities still come from the unfiltered distribution.
template <typename Real>
Candidate nucleus_decode(const ModelParams<Real>& params, const EncodedTriple& prefix,
                         const DecodeConfig& config, std::uint64_t seed,
                         const ControlTokens& controls = ControlTokens{}) {
    SeededRng rng(seed);
    return detail::decode_loop(
        params, prefix, config, controls,
        [&](const std::vector<double>& probs, Candidate& cand) {
            const auto kept = nucleus_filter(probs, config.p);
            cand.nucleus_support_sizes.push_back(kept.size());
            const double u = rng.next_double();
            double cum = 0.0;
            for (const auto& e : kept) {
                cum += e.prob;
                if (u < cum) {
                    return e.token;
                }
            }
            return kept.back().token;
        });
}

// Index of the candidate with the lowest score; ties keep the earliest.
inline std::size_t best_candidate_index(const std::vector<Candidate>& candidates) {
    if (candidates.empty()) {
        throw ConfigError("best_candidate_index: no candidates");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        if (candidates[i].score < candidates[best].score) {
            best = i;
        }
    }
    return best;
}

// Greedy mode returns the single greedy candidate. Nucleus mode draws
// n_candidates independent decodings (seed + index) and returns the one
// with the lowest score.
template <typename Real>
Candidate summarize(const ModelParams<Real>& params, const TokenSeq& source_tokens,
                    const SequenceLimits& limits, const DecodeConfig& config,
                    const ControlTokens& controls = ControlTokens{}) {
    config.validate();
    const EncodedTriple prefix = build_inference_prefix(source_tokens, limits, controls);
    if (config.mode == DecodeMode::greedy) {
        return greedy_decode(params, prefix, config, controls);
    }
    std::vector<Candidate> candidates;
    candidates.reserve(config.n_candidates);
    for (std::size_t i = 0; i < config.n_candidates; ++i) {
        candidates.push_back(nucleus_decode(params, prefix, config, config.seed + i, controls));
    }
    return candidates[best_candidate_index(candidates)];
}

}  // namespace dtrf
