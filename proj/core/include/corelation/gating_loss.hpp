#pragma once

#include <cstddef>
#include <span>

#include "corelation/autodiff.hpp"
#include "corelation/layers.hpp"
#include "corelation/parameters.hpp"

namespace corelation {

/// gamma = sigmoid(FC_gamma(alpha * c)), one value per row.
class GateHead {
public:
    GateHead() = default;
    GateHead(std::size_t width, ParameterStore& store, Rng& rng);

    Var operator()(Tape& tape, Var alpha, Var contextual) const;

private:
    Linear fc_;
};

/// Final probabilities: (1 - gamma) * direct + gamma * relation at `selected`
/// positions of `direct` (n x 1), and direct unchanged elsewhere.
Var aggregate(Var direct, Var relation, Var gamma, std::span<const std::size_t> selected);

/// Mean binary cross-entropy, probabilities clamped to [1e-10, 1 - 1e-10].
Var loss_ce(Var p, const Array& labels);

/// Sum of selected gate values over the number of evaluated codes (unselected count as 0).
Var loss_comp(Var selected_gamma, std::size_t evaluated_codes);

/// Mean symmetric Bernoulli KL between two prediction passes.
Var r_drop_penalty(Var p1, Var p2);

struct LossBreakdown {
    double l_ce = 0.0;
    double l_comp = 0.0;
    double l_rdrop = 0.0;
    double total = 0.0;
};

}  // namespace corelation
