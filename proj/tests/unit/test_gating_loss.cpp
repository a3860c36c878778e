#include <gtest/gtest.h>

#include <cmath>

#include "corelation/gating_loss.hpp"
#include "oracles.hpp"

using namespace corelation;
using namespace corelation::testing;

namespace {

struct Fixture {
    Array direct, relation;
    std::vector<std::size_t> selected{1, 3, 4};
};

Fixture fixture(std::uint64_t seed) {
    Rng rng(seed);
    return {random_array(6, 1, rng, 0.0, 1.0), random_array(3, 1, rng, 0.0, 1.0)};
}

}  // namespace

TEST(Aggregate, ZeroGateReturnsDirectBitwise) {
    const Fixture f = fixture(1);
    Tape tape(false);
    const Array p = aggregate(tape.constant(f.direct), tape.constant(f.relation),
                              tape.constant(Array::matrix(3, 1, 0.0)), f.selected)
                        .value();
    EXPECT_EQ(p, f.direct);
}

TEST(Aggregate, UnitGateReturnsRelationOnSelectedBitwise) {
    const Fixture f = fixture(2);
    Tape tape(false);
    const Array p = aggregate(tape.constant(f.direct), tape.constant(f.relation),
                              tape.constant(Array::matrix(3, 1, 1.0)), f.selected)
                        .value();
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(p[f.selected[i]], f.relation[i]);
    for (std::size_t i : {0u, 2u, 5u}) EXPECT_EQ(p[i], f.direct[i]);
}

TEST(Aggregate, MixesSelectedAndPassesTheRest) {
    const Fixture f = fixture(3);
    Rng rng(4);
    const Array gamma = random_array(3, 1, rng, 0.0, 1.0);
    Tape tape(false);
    const Array p =
        aggregate(tape.constant(f.direct), tape.constant(f.relation), tape.constant(gamma), f.selected).value();
    for (std::size_t i = 0; i < 3; ++i) {
        const std::size_t r = f.selected[i];
        EXPECT_NEAR(p[r], (1 - gamma[i]) * f.direct[r] + gamma[i] * f.relation[i], 1e-15);
    }
    for (std::size_t i : {0u, 2u, 5u}) EXPECT_EQ(p[i], f.direct[i]);
    EXPECT_THROW(aggregate(tape.constant(f.direct), tape.constant(f.relation), tape.constant(Array::matrix(2, 1)),
                           f.selected),
                 NumericError);
}

TEST(Aggregate, GradientsMatchFiniteDifferences) {
    const Fixture f = fixture(5);
    Rng rng(6);
    const double err = op_gradient_error({f.direct, f.relation, random_array(3, 1, rng, 0.0, 1.0)},
                                         [&](Tape&, const std::vector<Var>& x) {
                                             return aggregate(x[0], x[1], x[2], f.selected);
                                         });
    EXPECT_LE(err, 1e-7);
}

TEST(GateHead, IsSigmoidOfLinearOnProduct) {
    ParameterStore store;
    Rng rng(7);
    GateHead head(4, store, rng);
    store.get("gate.bias").value[0] = 0.3;
    const Array a = random_array(2, 4, rng), c = random_array(2, 4, rng);
    Tape tape(false);
    const Array g = head(tape, tape.constant(a), tape.constant(c)).value();
    const Array& w = store.get("gate.weight").value;
    for (std::size_t i = 0; i < 2; ++i) {
        double z = 0.3;
        for (std::size_t j = 0; j < 4; ++j) z += a(i, j) * c(i, j) * w(j, 0);
        EXPECT_NEAR(g[i], 1.0 / (1.0 + std::exp(-z)), 1e-15);
    }
}

TEST(Losses, CompPenaltyGradientIsOneOverEvaluated) {
    Parameter gamma{"g", Array::matrix(4, 1, {0.2, 0.9, 0.5, 0.1}), Array::matrix(4, 1)};
    Tape tape;
    Var l = loss_comp(tape.parameter(gamma), 10);
    EXPECT_NEAR(l.value()[0], 1.7 / 10.0, 1e-15);
    tape.backward(l);
    for (double g : gamma.grad.data()) EXPECT_EQ(g, 0.1);
    EXPECT_THROW(loss_comp(tape.constant(Array::matrix(1, 1)), 0), NumericError);
}

TEST(Losses, CrossEntropyIsMeanBce) {
    const Array p = Array::matrix(3, 1, {0.9, 0.2, 0.0});
    const Array y = Array::matrix(3, 1, {1.0, 0.0, 0.0});
    Tape tape(false);
    const double want = -(std::log(0.9) + std::log(0.8) + std::log(1.0 - 1e-10)) / 3.0;
    EXPECT_NEAR(loss_ce(tape.constant(p), y).value()[0], want, 1e-15);
}

TEST(Losses, RDropIsZeroForEqualPassesAndSymmetric) {
    Rng rng(8);
    const Array p = random_array(5, 1, rng, 0.05, 0.95), q = random_array(5, 1, rng, 0.05, 0.95);
    Tape tape(false);
    EXPECT_EQ(r_drop_penalty(tape.constant(p), tape.constant(p)).value()[0], 0.0);
    const double pq = r_drop_penalty(tape.constant(p), tape.constant(q)).value()[0];
    EXPECT_GT(pq, 0.0);
    EXPECT_NEAR(pq, r_drop_penalty(tape.constant(q), tape.constant(p)).value()[0], 1e-15);
}
