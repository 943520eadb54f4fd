// Differentiable operations over Tensor nodes. Each op validates shapes,
// computes the forward value eagerly, and attaches the backward closure.
// Broadcasting is deliberately limited to the one pattern the model needs:
// adding a (1 x n) bias to every row.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dtrf/tensor.hpp"

namespace dtrf {

namespace detail {

template <typename Real>
TensorPtr<Real> make_node(Shape shape, std::vector<TensorPtr<Real>> parents) {
    auto out = std::make_shared<Tensor<Real>>(std::move(shape), Real(0));
    out->requires_grad = false;
    for (const auto& p : parents) {
        if (p->requires_grad) {
            out->requires_grad = true;
        }
    }
    if (out->requires_grad) {
        out->parents = std::move(parents);
    }
    return out;
}

template <typename Real>
void require_same_shape(const char* op, const Tensor<Real>& a, const Tensor<Real>& b) {
    if (a.shape != b.shape) {
        throw ShapeError(std::string(op) + ": shapes disagree: " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
    }
}

}  // namespace detail

template <typename Real>
TensorPtr<Real> add(const TensorPtr<Real>& a, const TensorPtr<Real>& b) {
    detail::require_same_shape("add", *a, *b);
    auto out = detail::make_node<Real>(a->shape, {a, b});
    for (std::size_t i = 0; i < a->size(); ++i) {
        out->data[i] = a->data[i] + b->data[i];
    }
    if (out->requires_grad) {
        out->backprop = [](Tensor<Real>& self) {
            for (const auto& p : self.parents) {
                if (!p->requires_grad) {
                    continue;
                }
                p->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                    p->grad[i] += self.grad[i];
                }
            }
        };
    }
    return out;
}

template <typename Real>
TensorPtr<Real> add_n(const std::vector<TensorPtr<Real>>& xs) {
    if (xs.empty()) {
        throw ShapeError("add_n: needs at least one input");
    }
    for (const auto& x : xs) {
        detail::require_same_shape("add_n", *xs[0], *x);
    }
    auto out = detail::make_node<Real>(xs[0]->shape, xs);
    for (const auto& x : xs) {
        for (std::size_t i = 0; i < x->size(); ++i) {
            out->data[i] += x->data[i];
        }
    }
    if (out->requires_grad) {
        out->backprop = [](Tensor<Real>& self) {
            for (const auto& p : self.parents) {
                if (!p->requires_grad) {
                    continue;
                }
                p->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                    p->grad[i] += self.grad[i];
                }
            }
        };
    }
    return out;
}

template <typename Real>
TensorPtr<Real> sub(const TensorPtr<Real>& a, const TensorPtr<Real>& b) {
    detail::require_same_shape("sub", *a, *b);
    auto out = detail::make_node<Real>(a->shape, {a, b});
    for (std::size_t i = 0; i < a->size(); ++i) {
        out->data[i] = a->data[i] - b->data[i];
    }
    if (out->requires_grad) {
        out->backprop = [](Tensor<Real>& self) {
            auto& a = self.parents[0];
            auto& b = self.parents[1];
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                    a->grad[i] += self.grad[i];
                }
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                    b->grad[i] -= self.grad[i];
                }
            }
        };
    }
    return out;
}

template <typename Real>
TensorPtr<Real> mul(const TensorPtr<Real>& a, const TensorPtr<Real>& b) {
    detail::require_same_shape("mul", *a, *b);
    auto out = detail::make_node<Real>(a->shape, {a, b});
    for (std::size_t i = 0; i < a->size(); ++i) {
        out->data[i] = a->data[i] * b->data[i];
    }
    if (out->requires_grad) {
        out->backprop = [](Tensor<Real>& self) {
            auto& a = self.parents[0];
            auto& b = self.parents[1];
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                    a->grad[i] += self.grad[i] * b->data[i];
                }
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                    b->grad[i] += self.grad[i] * a->data[i];
                }
            }
        };
    }
    return out;
}

template <typename Real>
TensorPtr<Real> scale(const TensorPtr<Real>& x, Real factor) {
    auto out = detail::make_node<Real>(x->shape, {x});
    for (std::size_t i = 0; i < x->size(); ++i) {
        out->data[i] = x->data[i] * factor;
    }
    if (out->requires_grad) {
        out->backprop = [factor](Tensor<Real>& self) {
            auto& x = self.parents[0];
            x->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                x->grad[i] += self.grad[i] * factor;
            }
        };
    }
    return out;
}

// x: (m x n), bias: (1 x n); bias added to every row.
template <typename Real>
TensorPtr<Real> add_bias(const TensorPtr<Real>& x, const TensorPtr<Real>& bias) {
    if (x->rank() != 2 || bias->rank() != 2 || bias->rows() != 1 || bias->cols() != x->cols()) {
        throw ShapeError("add_bias: expected (m x n) plus (1 x n), got " + shape_str(x->shape) +
                         " and " + shape_str(bias->shape));
    }
    const std::size_t m = x->rows(), n = x->cols();
    auto out = detail::make_node<Real>(x->shape, {x, bias});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out->data[i * n + j] = x->data[i * n + j] + bias->data[j];
        }
    }
    if (out->requires_grad) {
        out->backprop = [m, n](Tensor<Real>& self) {
            auto& x = self.parents[0];
            auto& bias = self.parents[1];
            if (x->requires_grad) {
                x->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                    x->grad[i] += self.grad[i];
                }
            }
            if (bias->requires_grad) {
                bias->ensure_grad();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        bias->grad[j] += self.grad[i * n + j];
                    }
                }
            }
        };
    }
    return out;
}

template <typename Real>
TensorPtr<Real> matmul(const TensorPtr<Real>& a, const TensorPtr<Real>& b) {
    if (a->rank() != 2 || b->rank() != 2 || a->cols() != b->rows()) {
        throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a->shape) + " vs " +
                         shape_str(b->shape));
    }
    const std::size_t m = a->rows(), k = a->cols(), n = b->cols();
    auto out = detail::make_node<Real>(Shape{m, n}, {a, b});
    matmul_nn_acc(a->data.data(), b->data.data(), out->data.data(), m, k, n);
    if (out->requires_grad) {
        out->backprop = [m, k, n](Tensor<Real>& self) {
            auto& a = self.parents[0];
            auto& b = self.parents[1];
            if (a->requires_grad) {
                a->ensure_grad();
                // dA += dC B^T
                matmul_nt_acc(self.grad.data(), b->data.data(), a->grad.data(), m, n, k);
            }
            if (b->requires_grad) {
                b->ensure_grad();
                // dB += A^T dC
                matmul_tn_acc(a->data.data(), self.grad.data(), b->grad.data(), k, m, n);
            }
        };
    }
    return out;
}

template <typename Real>
TensorPtr<Real> transpose(const TensorPtr<Real>& x) {
    if (x->rank() != 2) {
        throw ShapeError("transpose: expected rank-2 tensor, got " + shape_str(x->shape));
    }
    const std::size_t m = x->rows(), n = x->cols();
    auto out = detail::make_node<Real>(Shape{n, m}, {x});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out->data[j * m + i] = x->data[i * n + j];
        }
    }
    if (out->requires_grad) {
        out->backprop = [m, n](Tensor<Real>& self) {
            auto& x = self.parents[0];
            x->ensure_grad();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    x->grad[i * n + j] += self.grad[j * m + i];
                }
            }
        };
    }
    return out;
}

// Rank-2 block slice, rows [r0, r1) and cols [c0, c1).
template <typename Real>
TensorPtr<Real> slice(const TensorPtr<Real>& x, std::size_t r0, std::size_t r1, std::size_t c0,
                      std::size_t c1) {
    if (x->rank() != 2 || r1 > x->rows() || c1 > x->cols() || r0 >= r1 || c0 >= c1) {
        throw ShapeError("slice: invalid block [" + std::to_string(r0) + "," + std::to_string(r1) +
                         ")x[" + std::to_string(c0) + "," + std::to_string(c1) + ") of " +
                         shape_str(x->shape));
    }
    const std::size_t n = x->cols();
    const std::size_t rows = r1 - r0, cols = c1 - c0;
    auto out = detail::make_node<Real>(Shape{rows, cols}, {x});
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            out->data[i * cols + j] = x->data[(r0 + i) * n + (c0 + j)];
        }
    }
    if (out->requires_grad) {
        out->backprop = [r0, c0, n, rows, cols](Tensor<Real>& self) {
            auto& x = self.parents[0];
            x->ensure_grad();
            for (std::size_t i = 0; i < rows; ++i) {
                for (std::size_t j = 0; j < cols; ++j) {
                    x->grad[(r0 + i) * n + (c0 + j)] += self.grad[i * cols + j];
                }
            }
        };
    }
    return out;
}

template <typename Real>
TensorPtr<Real> slice_rows(const TensorPtr<Real>& x, std::size_t r0, std::size_t r1) {
    return slice(x, r0, r1, 0, x->cols());
}

template <typename Real>
TensorPtr<Real> slice_cols(const TensorPtr<Real>& x, std::size_t c0, std::size_t c1) {
    return slice(x, 0, x->rows(), c0, c1);
}

// Concatenate rank-2 tensors along axis 0 (rows) or 1 (cols).
template <typename Real>
TensorPtr<Real> concat(const std::vector<TensorPtr<Real>>& xs, int axis) {
    if (xs.empty() || (axis != 0 && axis != 1)) {
        throw ShapeError("concat: needs inputs and axis 0 or 1");
    }
    const std::size_t fixed = (axis == 0) ? xs[0]->cols() : xs[0]->rows();
    std::size_t total = 0;
    for (const auto& x : xs) {
        if (x->rank() != 2 || ((axis == 0) ? x->cols() : x->rows()) != fixed) {
            throw ShapeError("concat: incompatible shapes " + shape_str(xs[0]->shape) + " vs " +
                             shape_str(x->shape));
        }
        total += (axis == 0) ? x->rows() : x->cols();
    }
    const Shape out_shape = (axis == 0) ? Shape{total, fixed} : Shape{fixed, total};
    auto out = detail::make_node<Real>(out_shape, xs);
    std::size_t offset = 0;
    for (const auto& x : xs) {
        if (axis == 0) {
            std::copy(x->data.begin(), x->data.end(), out->data.begin() + offset * fixed);
            offset += x->rows();
        } else {
            const std::size_t w = x->cols();
            for (std::size_t i = 0; i < fixed; ++i) {
                std::copy(x->data.begin() + i * w, x->data.begin() + (i + 1) * w,
                          out->data.begin() + i * total + offset);
            }
            offset += w;
        }
    }
    if (out->requires_grad) {
        out->backprop = [axis, fixed, total](Tensor<Real>& self) {
            std::size_t offset = 0;
            for (auto& p : self.parents) {
                const std::size_t w = (axis == 0) ? p->rows() : p->cols();
                if (p->requires_grad) {
                    p->ensure_grad();
                    if (axis == 0) {
                        for (std::size_t i = 0; i < p->size(); ++i) {
                            p->grad[i] += self.grad[offset * fixed + i];
                        }
                    } else {
                        for (std::size_t i = 0; i < fixed; ++i) {
                            for (std::size_t j = 0; j < w; ++j) {
                                p->grad[i * w + j] += self.grad[i * total + offset + j];
                            }
                        }
                    }
                }
                offset += w;
            }
        };
    }
    return out;
}

// out(:, j) = table(:, ids[j]); the embedding lookup. Gradients scatter-add
// back into the selected columns.
template <typename Real>
TensorPtr<Real> gather_cols(const TensorPtr<Real>& table, const std::vector<int>& ids) {
    if (table->rank() != 2) {
        throw ShapeError("gather_cols: table must be rank 2, got " + shape_str(table->shape));
    }
    if (ids.empty()) {
        throw ShapeError("gather_cols: empty index list");
    }
    const std::size_t d = table->rows(), v = table->cols(), n = ids.size();
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= v) {
            throw DataError("gather_cols: index " + std::to_string(id) + " out of range [0, " +
                            std::to_string(v) + ")");
        }
    }
    auto out = detail::make_node<Real>(Shape{d, n}, {table});
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t col = static_cast<std::size_t>(ids[j]);
        for (std::size_t i = 0; i < d; ++i) {
            out->data[i * n + j] = table->data[i * v + col];
        }
    }
    if (out->requires_grad) {
        out->backprop = [ids, d, v, n](Tensor<Real>& self) {
            auto& table = self.parents[0];
            table->ensure_grad();
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t col = static_cast<std::size_t>(ids[j]);
                for (std::size_t i = 0; i < d; ++i) {
                    table->grad[i * v + col] += self.grad[i * n + j];
                }
            }
        };
    }
    return out;
}

// Row-wise softmax with max subtraction. Rows sum to 1; -inf entries come
// out as exact zeros, which is what the causal mask relies on.
template <typename Real>
TensorPtr<Real> softmax_rows(const TensorPtr<Real>& x) {
    if (x->rank() < 1) {
        throw ShapeError("softmax_rows: expected rank >= 1, got " + shape_str(x->shape));
    }
    const std::size_t n = x->shape.back();
    const std::size_t m = x->size() / n;
    auto out = detail::make_node<Real>(x->shape, {x});
    for (std::size_t i = 0; i < m; ++i) {
        const Real* row = x->data.data() + i * n;
        Real* orow = out->data.data() + i * n;
        Real mx = row[0];
        for (std::size_t j = 1; j < n; ++j) {
            mx = std::max(mx, row[j]);
        }
        Real sum(0);
        for (std::size_t j = 0; j < n; ++j) {
            orow[j] = std::exp(row[j] - mx);
            sum += orow[j];
        }
        const Real inv = Real(1) / sum;
        for (std::size_t j = 0; j < n; ++j) {
            orow[j] *= inv;
        }
    }
    if (out->requires_grad) {
        out->backprop = [m, n](Tensor<Real>& self) {
            auto& x = self.parents[0];
            x->ensure_grad();
            for (std::size_t i = 0; i < m; ++i) {
                const Real* p = self.data.data() + i * n;
                const Real* g = self.grad.data() + i * n;
                Real dot(0);
                for (std::size_t j = 0; j < n; ++j) {
                    dot += p[j] * g[j];
                }
                Real* gx = x->grad.data() + i * n;
                for (std::size_t j = 0; j < n; ++j) {
                    gx[j] += p[j] * (g[j] - dot);
                }
            }
        };
    }
    return out;
}

// Per-row normalization over the last dimension followed by the affine
// gain/bias, both shaped (1 x n). Variance is the biased estimate.
template <typename Real>
TensorPtr<Real> layer_norm(const TensorPtr<Real>& x, const TensorPtr<Real>& gain,
                           const TensorPtr<Real>& bias, Real eps = Real(1e-5)) {
    if (x->rank() != 2 || gain->shape != Shape{1, x->cols()} ||
        bias->shape != Shape{1, x->cols()}) {
        throw ShapeError("layer_norm: got x " + shape_str(x->shape) + ", gain " +
                         shape_str(gain->shape) + ", bias " + shape_str(bias->shape));
    }
    const std::size_t m = x->rows(), n = x->cols();
    auto out = detail::make_node<Real>(x->shape, {x, gain, bias});
    // Cache the normalized values and inverse stddev for the backward pass.
    auto xhat = std::make_shared<std::vector<Real>>(m * n);
    auto inv_std = std::make_shared<std::vector<Real>>(m);
    for (std::size_t i = 0; i < m; ++i) {
        const Real* row = x->data.data() + i * n;
        Real mean(0);
        for (std::size_t j = 0; j < n; ++j) {
            mean += row[j];
        }
        mean /= Real(n);
        Real var(0);
        for (std::size_t j = 0; j < n; ++j) {
            const Real d = row[j] - mean;
            var += d * d;
        }
        var /= Real(n);
        const Real is = Real(1) / std::sqrt(var + eps);
        (*inv_std)[i] = is;
        for (std::size_t j = 0; j < n; ++j) {
            const Real h = (row[j] - mean) * is;
            (*xhat)[i * n + j] = h;
            out->data[i * n + j] = gain->data[j] * h + bias->data[j];
        }
    }
    if (out->requires_grad) {
        out->backprop = [m, n, xhat, inv_std](Tensor<Real>& self) {
            auto& x = self.parents[0];
            auto& gain = self.parents[1];
            auto& bias = self.parents[2];
            if (gain->requires_grad) {
                gain->ensure_grad();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        gain->grad[j] += self.grad[i * n + j] * (*xhat)[i * n + j];
                    }
                }
            }
            if (bias->requires_grad) {
                bias->ensure_grad();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        bias->grad[j] += self.grad[i * n + j];
                    }
                }
            }
            if (x->requires_grad) {
                x->ensure_grad();
                // dx = (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat)) * inv_std
                for (std::size_t i = 0; i < m; ++i) {
                    const Real* g = self.grad.data() + i * n;
                    const Real* h = xhat->data() + i * n;
                    Real sum_g(0), sum_gh(0);
                    std::vector<Real> dh(n);
                    for (std::size_t j = 0; j < n; ++j) {
                        dh[j] = g[j] * gain->data[j];
                        sum_g += dh[j];
                        sum_gh += dh[j] * h[j];
                    }
                    const Real is = (*inv_std)[i];
                    Real* gx = x->grad.data() + i * n;
                    for (std::size_t j = 0; j < n; ++j) {
                        gx[j] += (dh[j] - sum_g / Real(n) - h[j] * sum_gh / Real(n)) * is;
                    }
                }
            }
        };
    }
    return out;
}

// Exact (erf-based) GELU.
template <typename Real>
TensorPtr<Real> gelu(const TensorPtr<Real>& x) {
    auto out = detail::make_node<Real>(x->shape, {x});
    const Real inv_sqrt2 = Real(0.70710678118654752440);
    for (std::size_t i = 0; i < x->size(); ++i) {
        const Real v = x->data[i];
        out->data[i] = Real(0.5) * v * (Real(1) + std::erf(v * inv_sqrt2));
    }
    if (out->requires_grad) {
        out->backprop = [inv_sqrt2](Tensor<Real>& self) {
            auto& x = self.parents[0];
            x->ensure_grad();
            const Real inv_sqrt2pi = Real(0.39894228040143267794);
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                const Real v = x->data[i];
                const Real cdf = Real(0.5) * (Real(1) + std::erf(v * inv_sqrt2));
                const Real pdf = inv_sqrt2pi * std::exp(Real(-0.5) * v * v);
                x->grad[i] += self.grad[i] * (cdf + v * pdf);
            }
        };
    }
    return out;
}

// Mean negative log-probability of the targets. logits: (n x V), one row
// per prediction; targets: n ids in [0, V). Fused log-softmax for
// stability; returns a scalar (shape {1}).
template <typename Real>
TensorPtr<Real> cross_entropy(const TensorPtr<Real>& logits, const TokenSeq& targets) {
    if (logits->rank() != 2 || logits->rows() != targets.size()) {
        throw ShapeError("cross_entropy: logits " + shape_str(logits->shape) + " vs " +
                         std::to_string(targets.size()) + " targets");
    }
    const std::size_t n = logits->rows(), v = logits->cols();
    for (int t : targets) {
        if (t < 0 || static_cast<std::size_t>(t) >= v) {
            throw DataError("cross_entropy: target id " + std::to_string(t) +
                            " outside vocabulary of size " + std::to_string(v));
        }
    }
    auto out = detail::make_node<Real>(Shape{1}, {logits});
    auto probs = std::make_shared<std::vector<Real>>(n * v);
    Real total(0);
    for (std::size_t i = 0; i < n; ++i) {
        const Real* row = logits->data.data() + i * v;
        Real mx = row[0];
        for (std::size_t j = 1; j < v; ++j) {
            mx = std::max(mx, row[j]);
        }
        Real sum(0);
        Real* prow = probs->data() + i * v;
        for (std::size_t j = 0; j < v; ++j) {
            prow[j] = std::exp(row[j] - mx);
            sum += prow[j];
        }
        const Real inv = Real(1) / sum;
        for (std::size_t j = 0; j < v; ++j) {
            prow[j] *= inv;
        }
        const Real lse = mx + std::log(sum);
        total += lse - row[targets[i]];
    }
    out->data[0] = total / Real(n);
    if (out->requires_grad) {
        out->backprop = [n, v, targets, probs](Tensor<Real>& self) {
            auto& logits = self.parents[0];
            logits->ensure_grad();
            const Real g = self.grad[0] / Real(n);
            for (std::size_t i = 0; i < n; ++i) {
                const Real* prow = probs->data() + i * v;
                Real* grow = logits->grad.data() + i * v;
                for (std::size_t j = 0; j < v; ++j) {
                    grow[j] += g * prow[j];
                }
                grow[targets[i]] -= g;
            }
        };
    }
    return out;
}

// Mean of k same-shape scalars; used to combine per-sequence losses.
template <typename Real>
TensorPtr<Real> mean_of(const std::vector<TensorPtr<Real>>& xs) {
    return scale(add_n(xs), Real(1) / Real(xs.size()));
}

// Constant (n x n) additive causal mask: 0 on and below the diagonal,
// -inf above it.
template <typename Real>
TensorPtr<Real> causal_mask(std::size_t n) {
    auto mask = constant_filled<Real>(Shape{n, n}, Real(0));
    const Real neg_inf = -std::numeric_limits<Real>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            mask->data[i * n + j] = neg_inf;
        }
    }
    return mask;
}

}  // namespace dtrf
