// End-to-end gradient verification: the backward pass of the sequence
// loss against central finite differences of the forward value alone.
// Runs at double precision regardless of the training precision.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dtrf/model.hpp"
#include "dtrf/sequence.hpp"
#include "dtrf/trainer.hpp"

namespace dtrf {

struct GradCheckConfig {
    ModelConfig model;
    std::size_t samples = 200;
    double threshold = 1e-4;
    double step = 1e-5;
    std::uint64_t seed = 0;

    GradCheckConfig() {
        model.n_layers = 2;
        model.d_model = 16;
        model.n_heads = 2;
        model.vocab_size = 50;
        model.n_ctx = 32;
    }
};

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t samples = 0;
    bool pass = false;
    std::string worst_parameter;
};

// Relative error with an absolute floor, so parameters whose true
// gradient is almost zero compare against noise sensibly.
inline double gradcheck_rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

inline GradCheckResult run_gradcheck(const GradCheckConfig& config) {
    ModelConfig mc = config.model;
    mc.seed = config.seed;
    auto params = init_params<double>(mc);

    // a random but deterministic triple covering source and summary
    SeededRng rng(config.seed + 1);
    SequenceLimits limits;
    limits.n_ctx = mc.n_ctx;
    limits.max_source_tokens = mc.n_ctx;
    limits.max_summary_tokens = mc.n_ctx;
    TokenSeq x, y;
    const std::size_t m = 4 + rng.next_below(5);
    const std::size_t k = 2 + rng.next_below(3);
    const std::size_t usable = mc.vocab_size - Vocabulary::kNumSpecial;
    for (std::size_t i = 0; i < m; ++i) {
        x.push_back(static_cast<int>(Vocabulary::kNumSpecial + rng.next_below(usable)));
    }
    for (std::size_t i = 0; i < k; ++i) {
        y.push_back(static_cast<int>(Vocabulary::kNumSpecial + rng.next_below(usable)));
    }
    const EncodedTriple triple = build_training_triple(x, y, limits);

    backward(sequence_nll_graph(params, triple));

    GradCheckResult result;
    result.samples = config.samples;
    for (std::size_t s = 0; s < config.samples; ++s) {
        const std::size_t p = rng.next_below(params.named.size());
        auto& tensor = params.named[p].second;
        const std::size_t i = rng.next_below(tensor->size());
        const double orig = tensor->data[i];
        const double h = config.step * std::max(1.0, std::abs(orig));
        tensor->data[i] = orig + h;
        const double fp = sequence_nll(params, triple);
        tensor->data[i] = orig - h;
        const double fm = sequence_nll(params, triple);
        tensor->data[i] = orig;
        const double fd = (fp - fm) / (2.0 * h);
        const double rel = gradcheck_rel_err(tensor->grad[i], fd);
        if (rel > result.max_rel_err) {
            result.max_rel_err = rel;
            result.worst_parameter =
                params.named[p].first + "[" + std::to_string(i) + "]";
        }
    }
    result.pass = result.max_rel_err < config.threshold;
    return result;
}

}  // namespace dtrf
