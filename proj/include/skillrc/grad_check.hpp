#pragma once

#include <algorithm>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "skillrc/params.hpp"

namespace skillrc::nn {

struct ParamCoord {
    std::string name;
    std::size_t index;
};

/// Uniformly sample scalar coordinates across the trainable entries.
inline std::vector<ParamCoord> sample_param_coords(const ParamStore& params, std::size_t count,
                                                   std::mt19937_64& rng) {
    std::vector<std::pair<std::string, std::size_t>> sizes;
    std::size_t total = 0;
    for (const auto& [name, p] : params.entries()) {
        if (!p.trainable) continue;
        sizes.emplace_back(name, p.value.numel());
        total += p.value.numel();
    }
    if (total == 0) throw StateError("sample_param_coords: no trainable parameters");
    std::vector<ParamCoord> coords;
    coords.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        std::size_t flat = rng() % total;
        for (const auto& [name, n] : sizes) {
            if (flat < n) {
                coords.push_back({name, flat});
                break;
            }
            flat -= n;
        }
    }
    return coords;
}

/// Central-difference check of the analytic gradients produced by
/// `forward` (which must rebuild its graph from the current parameter
/// values on every call and return a scalar loss). Returns
/// max over coords of |a − n| / max(1, |a|, |n|).
inline double gradient_check(ParamStore& params, const std::function<Tensor()>& forward,
                             const std::vector<ParamCoord>& coords, double h = 1e-4) {
    params.zero_grads();
    Tensor loss = forward();
    if (!std::isfinite(loss.item())) throw NumericError("gradient_check: non-finite loss");
    backward(loss);

    std::vector<double> analytic(coords.size(), 0.0);
    for (std::size_t k = 0; k < coords.size(); ++k) {
        const Tensor& t = params.get(coords[k].name);
        if (t.grad) analytic[k] = (*t.grad)[coords[k].index];
    }
    params.zero_grads();

    double max_rel = 0.0;
    for (std::size_t k = 0; k < coords.size(); ++k) {
        Tensor& t = params.get(coords[k].name);
        double& v = (*t.data)[coords[k].index];
        double saved = v;
        v = saved + h;
        double f_plus = forward().item();
        v = saved - h;
        double f_minus = forward().item();
        v = saved;
        if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
            throw NumericError("gradient_check: non-finite loss under perturbation");
        }
        double numeric = (f_plus - f_minus) / (2.0 * h);
        double a = analytic[k];
        double rel = std::fabs(a - numeric) / std::max({1.0, std::fabs(a), std::fabs(numeric)});
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

}  // namespace skillrc::nn
