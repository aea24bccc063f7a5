#pragma once

#include <cmath>
#include <map>
#include <random>
#include <string>

#include "skillrc/tensor.hpp"

namespace skillrc::nn {

/// Uniform double in [0,1) from the top 53 bits; avoids the
/// implementation-defined std::uniform_real_distribution so that seeded
/// runs are reproducible everywhere.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_in(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

/// uniform(−r, r) with r = sqrt(6 / (rows + cols)).
inline Tensor glorot_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    double r = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::vector<double> values(rows * cols);
    for (auto& v : values) v = uniform_in(rng, -r, r);
    return Tensor({rows, cols}, std::move(values));
}

struct Param {
    Tensor value;
    bool trainable = true;
};

/// Named parameter bundle. Keys are hierarchical ("enc.fwd.w_ih") and the
/// map is ordered so iteration — and therefore optimizer update order —
/// is deterministic. The trainable flag is fixed at registration; it
/// gates gradient accumulation, never the stored values.
class ParamStore {
public:
    Tensor& add(const std::string& name, Tensor value, bool trainable = true) {
        value.requires_grad = trainable;
        if (trainable) value.ensure_grad();
        auto [it, inserted] = entries_.emplace(name, Param{std::move(value), trainable});
        if (!inserted) throw StateError("param store: duplicate name '" + name + "'");
        return it->second.value;
    }

    bool contains(const std::string& name) const { return entries_.count(name) != 0; }

    Tensor& get(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw StateError("param store: unknown name '" + name + "'");
        return it->second.value;
    }

    const Tensor& get(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw StateError("param store: unknown name '" + name + "'");
        return it->second.value;
    }

    bool trainable(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw StateError("param store: unknown name '" + name + "'");
        return it->second.trainable;
    }

    std::map<std::string, Param>& entries() { return entries_; }
    const std::map<std::string, Param>& entries() const { return entries_; }

    std::size_t size() const { return entries_.size(); }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& [name, p] : entries_) n += p.value.numel();
        return n;
    }

    void zero_grads() {
        for (auto& [name, p] : entries_) p.value.zero_grad();
    }

private:
    std::map<std::string, Param> entries_;
};

}  // namespace skillrc::nn
