#pragma once

#include <cstddef>
#include <string>

#include "corelation/autodiff.hpp"
#include "corelation/parameters.hpp"
#include "corelation/rng.hpp"

namespace corelation {

/// Whether a forward pass trains (dropout on) and where its masks come from.
struct ForwardMode {
    bool training = false;
    double dropout = 0.0;
    Rng* rng = nullptr;

    static ForwardMode eval() { return {}; }
    static ForwardMode train(double rate, Rng& rng) { return {true, rate, &rng}; }

    Var apply_dropout(Var x) const;
};

Array uniform_array(std::size_t rows, std::size_t cols, double bound, Rng& rng);
/// Glorot-uniform init, bound sqrt(6 / (rows + cols)).
Array xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng);

/// y = x W + b with W (in x out) and b (1 x out).
class Linear {
public:
    Linear() = default;
    Linear(std::size_t in, std::size_t out, ParameterStore& store, const std::string& name, Rng& rng,
           bool with_bias = true);

    Var operator()(Tape& tape, Var x) const;
    Parameter& weight() const { return *weight_; }
    Parameter* bias() const { return bias_; }

private:
    Parameter* weight_ = nullptr;
    Parameter* bias_ = nullptr;
};

}  // namespace corelation
