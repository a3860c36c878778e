#include "corelation/layers.hpp"

#include <cmath>

namespace corelation {

Var ForwardMode::apply_dropout(Var x) const {
    if (!training || dropout == 0.0) return x;
    if (rng == nullptr) throw NumericError("dropout requested without a random stream");
    return ad::dropout(x, dropout, *rng);
}

Array uniform_array(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
    Array a = Array::matrix(rows, cols);
    for (double& v : a.data()) v = rng.uniform(-bound, bound);
    return a;
}

Array xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
    return uniform_array(rows, cols, std::sqrt(6.0 / static_cast<double>(rows + cols)), rng);
}

Linear::Linear(std::size_t in, std::size_t out, ParameterStore& store, const std::string& name, Rng& rng,
               bool with_bias) {
    weight_ = &store.add(name + ".weight", xavier_uniform(in, out, rng));
    if (with_bias) bias_ = &store.add(name + ".bias", Array::matrix(1, out));
}

Var Linear::operator()(Tape& tape, Var x) const {
    Var y = ad::matmul(x, tape.parameter(*weight_));
    if (bias_) y = ad::add(y, tape.parameter(*bias_));
    return y;
}

}  // namespace corelation
