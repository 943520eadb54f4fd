// Dense row-major tensors with reverse-mode automatic differentiation.
// A Tensor is both a value and a node in the computation graph: ops in
// ops.hpp allocate fresh nodes, link them to their parents, and attach a
// closure that pushes gradients backward. backward() materializes the
// topological order once (ComputationRecord) and sweeps it in reverse.
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "dtrf/common.hpp"

namespace dtrf {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        os << (i ? ", " : "") << s[i];
    }
    os << ")";
    return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) {
        n *= d;
    }
    return n;
}

template <typename Real>
struct Tensor {
    using Ptr = std::shared_ptr<Tensor<Real>>;

    Shape shape;
    std::vector<Real> data;

    bool requires_grad = false;
    std::vector<Real> grad;  // allocated lazily, same shape as data

    // Graph bookkeeping. parents keep upstream nodes alive; backprop reads
    // this node's grad and accumulates into the parents' grads.
    std::vector<Ptr> parents;
    std::function<void(Tensor<Real>&)> backprop;

    Tensor() = default;
    Tensor(Shape s, Real fill) : shape(std::move(s)), data(shape_numel(shape), fill) {
        check_shape();
    }
    Tensor(Shape s, std::vector<Real> values) : shape(std::move(s)), data(std::move(values)) {
        check_shape();
        if (data.size() != shape_numel(shape)) {
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        }
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    std::size_t rows() const {
        require_rank2("rows");
        return shape[0];
    }
    std::size_t cols() const {
        require_rank2("cols");
        return shape[1];
    }

    Real& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    Real at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    void ensure_grad() {
        if (grad.empty()) {
            grad.assign(data.size(), Real(0));
        }
    }
    void zero_grad() {
        if (!grad.empty()) {
            std::fill(grad.begin(), grad.end(), Real(0));
        }
    }
    bool has_grad() const { return !grad.empty(); }

private:
    void check_shape() const {
        for (std::size_t d : shape) {
            if (d == 0) {
                throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
            }
        }
    }
    void require_rank2(const char* what) const {
        if (shape.size() != 2) {
            throw ShapeError(std::string(what) + " requires a rank-2 tensor, got " +
                             shape_str(shape));
        }
    }
};

template <typename Real>
using TensorPtr = std::shared_ptr<Tensor<Real>>;

// Leaf holding a constant value; gradients never flow into it.
template <typename Real>
TensorPtr<Real> constant(Shape shape, std::vector<Real> values) {
    auto t = std::make_shared<Tensor<Real>>(std::move(shape), std::move(values));
    return t;
}

template <typename Real>
TensorPtr<Real> constant_filled(Shape shape, Real fill) {
    return std::make_shared<Tensor<Real>>(std::move(shape), fill);
}

// Leaf holding a trainable value.
template <typename Real>
TensorPtr<Real> parameter(Shape shape, std::vector<Real> values) {
    auto t = std::make_shared<Tensor<Real>>(std::move(shape), std::move(values));
    t->requires_grad = true;
    return t;
}

template <typename Real>
TensorPtr<Real> parameter_filled(Shape shape, Real fill) {
    auto t = std::make_shared<Tensor<Real>>(std::move(shape), fill);
    t->requires_grad = true;
    return t;
}

template <typename Real>
TensorPtr<Real> randn_parameter(Shape shape, Real stddev, SeededRng& rng) {
    auto t = parameter_filled<Real>(std::move(shape), Real(0));
    for (Real& x : t->data) {
        x = static_cast<Real>(rng.next_normal(0.0, static_cast<double>(stddev)));
    }
    return t;
}

template <typename Real>
Real scalar_value(const TensorPtr<Real>& t) {
    if (t->size() != 1) {
        throw ShapeError("expected a scalar tensor, got shape " + shape_str(t->shape));
    }
    return t->data[0];
}

// Topologically ordered record of the ops reachable from a root; leaves
// first. backward() walks it exactly once, in reverse.
template <typename Real>
struct ComputationRecord {
    std::vector<Tensor<Real>*> order;
};

template <typename Real>
ComputationRecord<Real> record_graph(const TensorPtr<Real>& root) {
    ComputationRecord<Real> rec;
    std::unordered_set<const Tensor<Real>*> visited;
    // Iterative post-order DFS; the explicit stack holds (node, next child).
    std::vector<std::pair<Tensor<Real>*, std::size_t>> stack;
    if (root->requires_grad) {
        stack.emplace_back(root.get(), 0);
        visited.insert(root.get());
    }
    while (!stack.empty()) {
        auto& [node, child] = stack.back();
        if (child < node->parents.size()) {
            Tensor<Real>* p = node->parents[child].get();
            ++child;
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            rec.order.push_back(node);
            stack.pop_back();
        }
    }
    return rec;
}

// Reverse sweep from a scalar loss. Gradients accumulate (+=) into every
// reachable node with requires_grad, so two backward calls without zeroing
// add up, which is what gradient linearity demands.
template <typename Real>
void backward(const TensorPtr<Real>& loss) {
    if (loss->size() != 1) {
        throw ShapeError("backward expects a scalar loss, got shape " + shape_str(loss->shape));
    }
    if (!loss->requires_grad) {
        throw InternalError("backward called on a graph with no trainable inputs");
    }
    ComputationRecord<Real> rec = record_graph(loss);
    loss->ensure_grad();
    loss->grad[0] += Real(1);
    for (auto it = rec.order.rbegin(); it != rec.order.rend(); ++it) {
        Tensor<Real>* node = *it;
        if (node->backprop) {
            node->backprop(*node);
        }
    }
}

// ----- raw matmul kernels (row-major) -----
// C(m x n) += A(m x k) B(k x n)
template <typename Real>
void matmul_nn_acc(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k,
                   std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        Real* ci = c + i * n;
        const Real* ai = a + i * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const Real av = ai[kk];
            const Real* bk = b + kk * n;
            for (std::size_t j = 0; j < n; ++j) {
                ci[j] += av * bk[j];
            }
        }
    }
}

// C(m x n) += A(m x k) B(n x k)^T
template <typename Real>
void matmul_nt_acc(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k,
                   std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const Real* ai = a + i * k;
        Real* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const Real* bj = b + j * k;
            Real acc(0);
            for (std::size_t kk = 0; kk < k; ++kk) {
                acc += ai[kk] * bj[kk];
            }
            ci[j] += acc;
        }
    }
}

// C(m x n) += A(k x m)^T B(k x n)
template <typename Real>
void matmul_tn_acc(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k,
                   std::size_t n) {
    for (std::size_t kk = 0; kk < k; ++kk) {
        const Real* ak = a + kk * m;
        const Real* bk = b + kk * n;
        for (std::size_t i = 0; i < m; ++i) {
            const Real av = ak[i];
            Real* ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                ci[j] += av * bk[j];
            }
        }
    }
}

}  // namespace dtrf
