#pragma once

#include <cstdint>
#include <vector>

#include "camo/tensor.hpp"

namespace camo {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// AdamW with decoupled weight decay (both the adaptive update and the decay
// are scaled by lr, so lr=0 is the identity).
class AdamW {
public:
    AdamW(std::vector<Tensor> params, AdamWConfig cfg);

    // Applies one update using the gradients currently on the parameters.
    // Every parameter must carry a gradient.
    void step();
    void zero_grad();

    void set_lr(double lr) { cfg_.lr = lr; }
    double lr() const { return cfg_.lr; }
    std::int64_t step_count() const { return t_; }
    const std::vector<Tensor>& params() const { return params_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    AdamWConfig cfg_;
    std::int64_t t_ = 0;
};

// Linear warmup from 0 to base_lr over `warmup_steps`, constant afterwards.
// `step` is 1-based (the step about to be applied).
double warmup_constant_lr(double base_lr, std::int64_t step, std::int64_t warmup_steps);

}  // namespace camo
