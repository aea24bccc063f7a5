#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "skillrc/errors.hpp"

namespace skillrc::nn {

struct Node;

/// Dense float64 tensor with an optional gradient slot.
///
/// Copies are shallow: they alias the same storage, which is what lets a
/// graph node hold its parents cheaply. Rank 1 (vector) and rank 2
/// (row-major matrix) cover everything in this library.
struct Tensor {
    std::vector<std::size_t> shape;
    std::shared_ptr<std::vector<double>> data;
    std::shared_ptr<std::vector<double>> grad;  // lazily allocated, same length as data
    bool requires_grad = false;
    std::shared_ptr<Node> node;  // null for leaves and constants

    Tensor() = default;

    Tensor(std::vector<std::size_t> shp, std::vector<double> values, bool req_grad = false)
        : shape(std::move(shp)),
          data(std::make_shared<std::vector<double>>(std::move(values))),
          requires_grad(req_grad) {
        if (data->size() != numel()) {
            throw DimensionError("tensor: data length " + std::to_string(data->size()) +
                                 " does not match shape product " + std::to_string(numel()));
        }
        if (requires_grad) ensure_grad();
    }

    static Tensor zeros(std::vector<std::size_t> shp, bool req_grad = false) {
        std::size_t n = 1;
        for (auto d : shp) n *= d;
        return Tensor(std::move(shp), std::vector<double>(n, 0.0), req_grad);
    }

    static Tensor vector(std::vector<double> values, bool req_grad = false) {
        std::size_t n = values.size();
        return Tensor({n}, std::move(values), req_grad);
    }

    static Tensor scalar(double v, bool req_grad = false) {
        return Tensor({1}, std::vector<double>{v}, req_grad);
    }

    std::size_t numel() const {
        std::size_t n = 1;
        for (auto d : shape) n *= d;
        return n;
    }

    std::size_t rank() const { return shape.size(); }
    std::size_t rows() const { return shape.at(0); }
    std::size_t cols() const { return shape.at(1); }

    double& operator()(std::size_t i) { return (*data)[i]; }
    double operator()(std::size_t i) const { return (*data)[i]; }
    double& operator()(std::size_t r, std::size_t c) { return (*data)[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const { return (*data)[r * cols() + c]; }

    double item() const {
        if (numel() != 1) throw DimensionError("item: tensor is not a scalar");
        return (*data)[0];
    }

    /// Ensure the gradient buffer exists (zero-filled). The buffer must be
    /// allocated before a tensor is copied into a graph: copies share the
    /// buffer, so late allocation would not propagate to existing copies.
    /// Setting requires_grad (constructor, make_op, ParamStore::add)
    /// allocates eagerly for exactly this reason.
    std::vector<double>& ensure_grad() {
        if (!grad) grad = std::make_shared<std::vector<double>>(data->size(), 0.0);
        return *grad;
    }

    void zero_grad() {
        if (grad) std::fill(grad->begin(), grad->end(), 0.0);
    }
};

struct Node {
    std::vector<Tensor> parents;
    // Receives the op output; reads out.grad and accumulates into parent grads.
    std::function<void(const Tensor&)> backward;
};

namespace detail {

inline bool& finite_checks_flag() {
    static bool enabled = true;
    return enabled;
}

}  // namespace detail

/// NaN/Inf detection after every op. On by default; tests may toggle it.
inline void set_finite_checks(bool enabled) { detail::finite_checks_flag() = enabled; }
inline bool finite_checks_enabled() { return detail::finite_checks_flag(); }

inline void check_finite(const Tensor& t, const char* op) {
    if (!finite_checks_enabled()) return;
    for (double v : *t.data) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string(op) + ": non-finite value in output");
        }
    }
}

/// Reverse-mode sweep from a scalar root. Seeds d(root)/d(root) = 1, walks
/// the graph in reverse topological order and runs each node's backward.
inline void backward(Tensor& root) {
    if (root.numel() != 1) throw ContractError("backward: root must be a scalar");
    if (!root.requires_grad) throw StateError("backward: root does not require grad");

    // Iterative post-order DFS over distinct nodes.
    struct Frame {
        Tensor t;
        std::size_t next_parent = 0;
    };
    std::vector<Tensor> order;
    std::unordered_set<const Node*> seen;
    std::vector<Frame> stack;
    if (root.node && seen.insert(root.node.get()).second) stack.push_back({root});
    while (!stack.empty()) {
        Frame& top = stack.back();
        const auto& parents = top.t.node->parents;
        if (top.next_parent < parents.size()) {
            Tensor p = parents[top.next_parent++];
            if (p.node && p.requires_grad && seen.insert(p.node.get()).second) {
                stack.push_back({std::move(p)});  // invalidates `top`; re-fetched next iteration
            }
        } else {
            order.push_back(top.t);
            stack.pop_back();
        }
    }

    root.ensure_grad();
    (*root.grad)[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        it->node->backward(*it);
    }
}

}  // namespace skillrc::nn
