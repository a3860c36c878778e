#pragma once

#include <cstddef>
#include <vector>

#include "corelation/parameters.hpp"

namespace corelation {

struct AdamConfig {
    double base_lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Length of the linear decay schedule; 0 disables decay.
    std::size_t total_steps = 0;
};

/// Adam with a linearly decayed learning rate
///   lr(t) = base_lr * max(0, 1 - t / total_steps),
/// where t is the number of updates already applied.
class Adam {
public:
    Adam(AdamConfig config, const ParameterStore& params);

    double learning_rate() const { return learning_rate_at(step_); }
    double learning_rate_at(std::size_t t) const;
    std::size_t steps() const { return step_; }
    const AdamConfig& config() const { return config_; }

    /// Applies one update from each parameter's accumulated grad.
    void step(ParameterStore& params);

private:
    AdamConfig config_;
    std::size_t step_ = 0;
    std::vector<Array> first_;
    std::vector<Array> second_;
};

}  // namespace corelation
