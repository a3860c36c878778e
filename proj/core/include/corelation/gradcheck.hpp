#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "corelation/autodiff.hpp"
#include "corelation/rng.hpp"

namespace corelation {

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t coordinates = 0;
    std::string worst_parameter;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Builds a scalar loss on the given tape from the current parameter values.
/// Must be deterministic: dropout masks, if any, must be redrawn from a fixed seed.
using LossBuilder = std::function<Var(Tape&)>;

/// Compares backward() against central differences (f(x+h) - f(x-h)) / 2h.
///
/// Checks every coordinate when the parameters hold at most `coordinates`
/// scalars, otherwise a random subset of that size. The relative error of a
/// coordinate is |a - n| / max(|a|, |n|, 1e-8).
GradCheckResult finite_difference_check(const LossBuilder& loss, const std::vector<Parameter*>& params,
                                        double h, Rng& rng, std::size_t coordinates = 64);

}  // namespace corelation
