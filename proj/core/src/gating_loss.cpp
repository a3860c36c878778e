#include "corelation/gating_loss.hpp"

namespace corelation {

GateHead::GateHead(std::size_t width, ParameterStore& store, Rng& rng) : fc_(width, 1, store, "gate", rng) {}

Var GateHead::operator()(Tape& tape, Var alpha, Var contextual) const {
    return ad::sigmoid(fc_(tape, ad::mul(alpha, contextual)));
}

Var aggregate(Var direct, Var relation, Var gamma, std::span<const std::size_t> selected) {
    if (relation.rows() != selected.size() || gamma.rows() != selected.size() || relation.cols() != 1 ||
        gamma.cols() != 1 || direct.cols() != 1) {
        throw NumericError("aggregate: relation/gate rows must match the selection");
    }
    Var direct_sel = ad::gather_rows(direct, selected);
    Var mixed = ad::add(ad::mul(ad::affine(gamma, -1.0, 1.0), direct_sel), ad::mul(gamma, relation));
    return ad::scatter_rows(direct, selected, mixed);
}

Var loss_ce(Var p, const Array& labels) { return ad::binary_cross_entropy(p, labels); }

Var loss_comp(Var selected_gamma, std::size_t evaluated_codes) {
    if (evaluated_codes == 0) throw NumericError("loss_comp: no evaluated codes");
    return ad::scale(ad::sum(selected_gamma), 1.0 / static_cast<double>(evaluated_codes));
}

Var r_drop_penalty(Var p1, Var p2) { return ad::symmetric_bernoulli_kl(p1, p2); }

}  // namespace corelation
