#include "cotsnet/optim.hpp"

#include <cmath>

namespace cots::nn {

AdamW::AdamW(std::vector<Parameter*> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Parameter* p : params_) {
        m_.emplace_back(static_cast<size_t>(p->value.numel()), 0.0f);
        v_.emplace_back(static_cast<size_t>(p->value.numel()), 0.0f);
    }
}

void AdamW::zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
}

double AdamW::grad_global_norm() const {
    double sq = 0.0;
    for (const Parameter* p : params_)
        for (int64_t i = 0; i < p->grad.numel(); ++i) {
            const double g = p->grad.data()[i];
            sq += g * g;
        }
    return std::sqrt(sq);
}

void AdamW::step() {
    double clip_scale = 1.0;
    if (cfg_.clip_norm > 0.0) {
        const double norm = grad_global_norm();
        if (norm > cfg_.clip_norm) clip_scale = cfg_.clip_norm / norm;
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t k = 0; k < params_.size(); ++k) {
        Parameter* p = params_[k];
        float* w = p->value.data();
        const float* g = p->grad.data();
        float* m = m_[k].data();
        float* v = v_[k].data();
        for (int64_t i = 0; i < p->value.numel(); ++i) {
            const double gi = static_cast<double>(g[i]) * clip_scale;
            const double mi = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
            const double vi = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            const double upd = cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                                          cfg_.weight_decay * static_cast<double>(w[i]));
            w[i] = static_cast<float>(w[i] - upd);
        }
    }
}

} // namespace cots::nn
