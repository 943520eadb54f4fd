// Maximum-likelihood training: per-sequence NLL over every predicted
// position, Adam with bias correction, deterministic epoch shuffling and
// validation-based early stopping. Sequences are forwarded individually
// and their losses averaged, so the batch objective is exactly the mean
// of per-sequence losses and no padding is ever needed.
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "dtrf/common.hpp"
#include "dtrf/model.hpp"
#include "dtrf/ops.hpp"
#include "dtrf/sequence.hpp"

namespace dtrf {

struct TrainConfig {
    double learning_rate = 5e-5;
    std::size_t batch_size = 16;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t max_steps = 1000;
    std::size_t eval_interval = 50;
    std::size_t patience = 3;
    double grad_clip = 0.0;  // global norm; 0 disables
    // Restrict the loss to the summary segment. Off by default: the
    // objective covers the whole sequence, source tokens included.
    bool summary_only_loss = false;
    std::uint64_t seed = 0;

    void validate() const {
        if (learning_rate < 0) {
            throw ConfigError("train config: learning rate must be non-negative");
        }
        if (batch_size == 0 || eval_interval == 0 || patience == 0) {
            throw ConfigError("train config: batch_size, eval_interval and patience must be positive");
        }
        if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1 || adam_eps <= 0) {
            throw ConfigError("train config: invalid Adam constants");
        }
    }
};

template <typename Real>
struct OptimizerState {
    // First/second moment buffers aligned with the parameter order.
    std::vector<std::vector<Real>> m;
    std::vector<std::vector<Real>> v;
    std::size_t step = 0;

    template <typename P>
    static OptimizerState zeros_like(const P& params) {
        OptimizerState s;
        for (const auto& [name, t] : params.named) {
            s.m.emplace_back(t->size(), Real(0));
            s.v.emplace_back(t->size(), Real(0));
        }
        return s;
    }
};

// Mean over all predicted positions of -log p(t_i | t_0..t_{i-1}). Every
// position contributes, source tokens included, unless summary_only
// restricts the targets to the summary segment (beta's prediction of y_0
// onward through delta).
template <typename Real>
TensorPtr<Real> sequence_nll_graph(const ModelParams<Real>& params, const EncodedTriple& triple,
                                   bool summary_only = false) {
    const std::size_t n = triple.S.size();
    if (n < 2) {
        throw DataError("sequence_nll: sequence of length " + std::to_string(n) +
                        " has nothing to predict");
    }
    auto logits = forward_logits(params, triple.S, triple.P, triple.Q);
    const std::size_t first_target = summary_only ? triple.summary_start + 1 : 1;
    if (first_target >= n) {
        throw DataError("sequence_nll: no summary targets in triple");
    }
    auto rows = slice_rows(logits, first_target - 1, n - 1);
    const TokenSeq targets(triple.S.begin() + static_cast<std::ptrdiff_t>(first_target),
                           triple.S.end());
    return cross_entropy(rows, targets);
}

template <typename Real>
double sequence_nll(const ModelParams<Real>& params, const EncodedTriple& triple,
                    bool summary_only = false) {
    return static_cast<double>(scalar_value(sequence_nll_graph(params, triple, summary_only)));
}

// Standard Adam update with bias correction; increments the shared step
// counter and zeroes the gradients afterwards.
template <typename Real>
void adam_step(ModelParams<Real>& params, OptimizerState<Real>& state, const TrainConfig& config) {
    if (state.m.size() != params.named.size()) {
        throw InternalError("adam_step: optimizer state does not match parameter list");
    }
    if (config.grad_clip > 0.0) {
        double norm_sq = 0.0;
        for (const auto& [name, t] : params.named) {
            if (!t->has_grad()) {
                continue;
            }
            for (Real g : t->grad) {
                norm_sq += static_cast<double>(g) * static_cast<double>(g);
            }
        }
        const double norm = std::sqrt(norm_sq);
        if (norm > config.grad_clip) {
            const Real factor = static_cast<Real>(config.grad_clip / norm);
            for (auto& [name, t] : params.named) {
                if (!t->has_grad()) {
                    continue;
                }
                for (Real& g : t->grad) {
                    g *= factor;
                }
            }
        }
    }
    state.step += 1;
    const Real lr = static_cast<Real>(config.learning_rate);
    const Real b1 = static_cast<Real>(config.beta1);
    const Real b2 = static_cast<Real>(config.beta2);
    const Real eps = static_cast<Real>(config.adam_eps);
    const Real bc1 = Real(1) - static_cast<Real>(std::pow(config.beta1, double(state.step)));
    const Real bc2 = Real(1) - static_cast<Real>(std::pow(config.beta2, double(state.step)));
    for (std::size_t p = 0; p < params.named.size(); ++p) {
        auto& t = params.named[p].second;
        if (!t->has_grad()) {
            throw InternalError("adam_step: parameter '" + params.named[p].first +
                                "' has no gradient; was backward run?");
        }
        auto& m = state.m[p];
        auto& v = state.v[p];
        for (std::size_t i = 0; i < t->size(); ++i) {
            const Real g = t->grad[i];
            m[i] = b1 * m[i] + (Real(1) - b1) * g;
            v[i] = b2 * v[i] + (Real(1) - b2) * g * g;
            const Real mhat = m[i] / bc1;
            const Real vhat = v[i] / bc2;
            t->data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
        t->zero_grad();
    }
}

struct EvalPoint {
    std::size_t step = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double wall_time = 0.0;
};

template <typename Real>
struct TrainResult {
    ModelParams<Real> best_params;
    double best_val_loss = 0.0;
    std::size_t best_step = 0;
    std::size_t steps_run = 0;
    std::vector<EvalPoint> history;
};

template <typename Real>
double mean_validation_loss(const ModelParams<Real>& params,
                            const std::vector<EncodedTriple>& val_set, bool summary_only = false) {
    double total = 0.0;
    for (const auto& triple : val_set) {
        total += sequence_nll(params, triple, summary_only);
    }
    return total / static_cast<double>(val_set.size());
}

// Runs until the validation loss stops improving for `patience`
// consecutive evaluations or max_steps is reached, and returns the
// parameters with the best validation loss. The optional log stream
// receives one JSON object per evaluation.
template <typename Real>
TrainResult<Real> train(const ModelParams<Real>& initial,
                        const std::vector<EncodedTriple>& train_set,
                        const std::vector<EncodedTriple>& val_set, const TrainConfig& config,
                        std::ostream* log = nullptr) {
    config.validate();
    if (train_set.empty() || val_set.empty()) {
        throw ConfigError("train: empty training or validation split");
    }
    ModelParams<Real> params = initial.clone();
    OptimizerState<Real> state = OptimizerState<Real>::zeros_like(params);
    SeededRng rng(config.seed);

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    rng.shuffle(order);
    std::size_t cursor = 0;

    // The first evaluation establishes the baseline; patience counts
    // consecutive evaluations that fail to improve on the best so far.
    TrainResult<Real> result;
    result.best_params = params.clone();
    result.best_val_loss = std::numeric_limits<double>::infinity();
    result.best_step = 0;

    const auto start = std::chrono::steady_clock::now();
    double train_loss_accum = 0.0;
    std::size_t train_loss_count = 0;
    std::size_t evals_without_improvement = 0;

    for (std::size_t step = 1; step <= config.max_steps; ++step) {
        std::vector<TensorPtr<Real>> losses;
        losses.reserve(config.batch_size);
        for (std::size_t b = 0; b < config.batch_size; ++b) {
            if (cursor == order.size()) {
                rng.shuffle(order);
                cursor = 0;
            }
            losses.push_back(
                sequence_nll_graph(params, train_set[order[cursor++]], config.summary_only_loss));
        }
        auto loss = mean_of(losses);
        backward(loss);
        adam_step(params, state, config);
        train_loss_accum += static_cast<double>(scalar_value(loss));
        train_loss_count += 1;
        result.steps_run = step;

        if (step % config.eval_interval == 0 || step == config.max_steps) {
            EvalPoint pt;
            pt.step = step;
            pt.train_loss = train_loss_accum / static_cast<double>(train_loss_count);
            pt.val_loss = mean_validation_loss(params, val_set, config.summary_only_loss);
            pt.wall_time =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            result.history.push_back(pt);
            train_loss_accum = 0.0;
            train_loss_count = 0;
            if (log) {
                (*log) << "{\"step\":" << pt.step << ",\"train_loss\":" << pt.train_loss
                       << ",\"val_loss\":" << pt.val_loss << ",\"wall_time\":" << pt.wall_time
                       << "}\n";
            }
            if (pt.val_loss < result.best_val_loss) {
                result.best_val_loss = pt.val_loss;
                result.best_step = step;
                result.best_params = params.clone();
                evals_without_improvement = 0;
            } else {
                evals_without_improvement += 1;
                if (evals_without_improvement >= config.patience) {
                    break;
                }
            }
            if (step == config.max_steps) {
                break;
            }
        }
    }
    return result;
}

}  // namespace dtrf
