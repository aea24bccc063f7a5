#pragma once

#include <cmath>
#include <map>
#include <vector>

#include "skillrc/params.hpp"

namespace skillrc::nn {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 5.0;  // global gradient-norm clip; <= 0 disables
};

/// Adam with bias correction and global gradient-norm clipping. Moments
/// are kept per parameter name; frozen entries are never touched.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    const AdamConfig& config() const { return cfg_; }
    std::size_t steps_done() const { return step_; }

    void step(ParamStore& params) {
        ++step_;
        double sq_norm = 0.0;
        for (auto& [name, p] : params.entries()) {
            if (!p.trainable) continue;
            if (!p.value.grad) {
                throw StateError("adam: trainable param '" + name + "' has no gradient");
            }
            for (double g : *p.value.grad) sq_norm += g * g;
        }
        double scale = 1.0;
        if (cfg_.clip_norm > 0.0) {
            double norm = std::sqrt(sq_norm);
            if (norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;
        }

        double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (auto& [name, p] : params.entries()) {
            if (!p.trainable) continue;
            auto& value = *p.value.data;
            auto& grad = *p.value.grad;
            auto& mom = moments_[name];
            if (mom.m.empty()) {
                mom.m.assign(value.size(), 0.0);
                mom.v.assign(value.size(), 0.0);
            }
            for (std::size_t i = 0; i < value.size(); ++i) {
                double g = grad[i] * scale;
                mom.m[i] = cfg_.beta1 * mom.m[i] + (1.0 - cfg_.beta1) * g;
                mom.v[i] = cfg_.beta2 * mom.v[i] + (1.0 - cfg_.beta2) * g * g;
                double m_hat = mom.m[i] / bc1;
                double v_hat = mom.v[i] / bc2;
                value[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
            }
        }
        params.zero_grads();
    }

private:
    struct Moments {
        std::vector<double> m;
        std::vector<double> v;
    };

    AdamConfig cfg_;
    std::size_t step_ = 0;
    std::map<std::string, Moments> moments_;
};

}  // namespace skillrc::nn
