#include "scaleformer/optim.hpp"

#include <cmath>

namespace scaleformer {

void Adam::add_group(ParameterSet& params, double lr) {
    for (auto& p : params) slots_.push_back({&p, lr, std::vector<double>(p.value.size(), 0.0),
                                             std::vector<double>(p.value.size(), 0.0)});
}

void Adam::step() {
    ++t_;
    const double t = static_cast<double>(t_);
    const double c1 = 1.0 - std::pow(options_.beta1, t);
    const double c2 = 1.0 - std::pow(options_.beta2, t);
    for (auto& slot : slots_) {
        auto& value = slot.param->value.data();
        const auto& grad = slot.param->grad.data();
        if (grad.size() != value.size()) continue;  // never reached by backward
        for (std::size_t i = 0; i < value.size(); ++i) {
            slot.m[i] = options_.beta1 * slot.m[i] + (1.0 - options_.beta1) * grad[i];
            slot.v[i] = options_.beta2 * slot.v[i] + (1.0 - options_.beta2) * grad[i] * grad[i];
            const double m_hat = slot.m[i] / c1;
            const double v_hat = slot.v[i] / c2;
            value[i] -= slot.lr * m_hat / (std::sqrt(v_hat) + options_.eps);
        }
    }
}

double grad_norm(const std::vector<ParameterSet*>& sets) {
    double sq = 0.0;
    for (const auto* set : sets)
        for (const auto& p : *set)
            for (double g : p.grad.data()) sq += g * g;
    return std::sqrt(sq);
}

double clip_grad_norm(const std::vector<ParameterSet*>& sets, double max_norm) {
    const double norm = grad_norm(sets);
    if (norm > max_norm && norm > 0.0) {
        const double k = max_norm / norm;
        for (auto* set : sets)
            for (auto& p : *set)
                for (double& g : p.grad.data()) g *= k;
    }
    return norm;
}

bool EarlyStopper::update(double value) {
    ++epoch_;
    if (value < best_) {
        best_ = value;
        best_epoch_ = epoch_;
        bad_epochs_ = 0;
        return true;
    }
    ++bad_epochs_;
    return false;
}

}  // namespace scaleformer
