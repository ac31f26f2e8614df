#include "camo/optim.hpp"

#include <cmath>

namespace camo {

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    check_contract(!params_.empty(), "AdamW: no parameters");
    for (const auto& p : params_) {
        check_contract(p.requires_grad(), "AdamW: parameter does not require grad");
        m_.emplace_back(p.data().size(), 0.0);
        v_.emplace_back(p.data().size(), 0.0);
    }
}

void AdamW::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        auto& p = params_[pi];
        check_contract(p.has_grad(), "AdamW: parameter missing gradient at step");
        const auto& g = p.grad();
        auto& w = p.mutable_data();
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w[i]);
        }
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

double warmup_constant_lr(double base_lr, std::int64_t step, std::int64_t warmup_steps) {
    check_contract(step >= 1, "warmup_constant_lr: step is 1-based");
    if (warmup_steps <= 0 || step >= warmup_steps) return base_lr;
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
}

}  // namespace camo
