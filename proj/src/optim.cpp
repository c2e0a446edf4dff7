#include "dendron/optim.hpp"

#include <cmath>

namespace dendron {

void Optimizer::step(std::span<Param*> params) {
    if (cfg_.kind == OptimizerKind::kSgd) {
        for (Param* p : params) {
            if (p->frozen) continue;
            for (std::size_t i = 0; i < p->value.size(); ++i)
                p->value[i] -= cfg_.lr * p->grad[i];
        }
        return;
    }

    if (m_.empty()) {
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (Param* p : params) {
            m_.emplace_back(p->value.shape());
            v_.emplace_back(p->value.shape());
        }
    } else if (m_.size() != params.size()) {
        throw ValidationError("optimizer was created for a different param set");
    }

    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Param* p = params[pi];
        if (p->frozen) continue;
        Tensor& m = m_[pi];
        Tensor& v = v_[pi];
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double g = p->grad[i];
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p->value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
        }
    }
}

void Optimizer::zero_grad(std::span<Param*> params) {
    for (Param* p : params) p->zero_grad();
}

} // namespace dendron
