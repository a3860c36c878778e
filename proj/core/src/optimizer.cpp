#include "corelation/optimizer.hpp"

#include <algorithm>
#include <cmath>

namespace corelation {

Adam::Adam(AdamConfig config, const ParameterStore& params) : config_(config) {
    for (const auto& p : params.all()) {
        first_.emplace_back(p.value.shape());
        second_.emplace_back(p.value.shape());
    }
}

double Adam::learning_rate_at(std::size_t t) const {
    if (config_.total_steps == 0) return config_.base_lr;
    const double frac = static_cast<double>(t) / static_cast<double>(config_.total_steps);
    return config_.base_lr * std::max(0.0, 1.0 - frac);
}

void Adam::step(ParameterStore& params) {
    auto& all = params.all();
    if (all.size() != first_.size()) {
        throw NumericError("adam: parameter count changed from " + std::to_string(first_.size()) + " to " +
                           std::to_string(all.size()));
    }
    const double lr = learning_rate();
    ++step_;
    const double t = static_cast<double>(step_);
    const double c1 = 1.0 - std::pow(config_.beta1, t);
    const double c2 = 1.0 - std::pow(config_.beta2, t);
    for (std::size_t k = 0; k < all.size(); ++k) {
        Parameter& p = all[k];
        if (p.grad.shape() != p.value.shape()) {
            throw NumericError("adam: gradient shape " + p.grad.shape_string() + " does not match " +
                               p.name + " " + p.value.shape_string());
        }
        Array& m = first_[k];
        Array& v = second_[k];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad[i];
            m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
            v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
            if (lr == 0.0) continue;
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            p.value[i] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
        }
    }
}

}  // namespace corelation
