#include <gtest/gtest.h>

#include <cmath>

#include "corelation/code_attention.hpp"
#include "oracles.hpp"

using namespace corelation;
using namespace corelation::testing;

namespace {

Array affine_oracle(const Array& x, const Array& w, const Array& b) {
    Array y = Array::matrix(x.rows(), w.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < w.cols(); ++j) {
            double s = b[j];
            for (std::size_t p = 0; p < x.cols(); ++p) s += x(i, p) * w(p, j);
            y(i, j) = s;
        }
    return y;
}

Array linear_oracle(const ParameterStore& store, const std::string& name, const Array& x) {
    return affine_oracle(x, store.get(name + ".weight").value, store.get(name + ".bias").value);
}

/// Naive attention: for each synonym row, softmax over note positions of q.k / sqrt(a).
Array contextualize_oracle(const ParameterStore& store, const Array& synonyms, const Array& states,
                           std::size_t a, Array* weights) {
    const Array q = linear_oracle(store, "attention.query", synonyms);
    const Array k = linear_oracle(store, "attention.key", states);
    const Array v = linear_oracle(store, "attention.value", states);
    Array mixed = Array::matrix(synonyms.rows(), a);
    *weights = Array::matrix(synonyms.rows(), states.rows());
    for (std::size_t r = 0; r < synonyms.rows(); ++r) {
        std::vector<double> s(states.rows());
        double top = -INFINITY;
        for (std::size_t d = 0; d < states.rows(); ++d) {
            double dot = 0;
            for (std::size_t j = 0; j < a; ++j) dot += q(r, j) * k(d, j);
            s[d] = dot / std::sqrt(static_cast<double>(a));
            top = std::max(top, s[d]);
        }
        double z = 0;
        for (double& x : s) z += (x = std::exp(x - top));
        for (std::size_t d = 0; d < states.rows(); ++d) {
            (*weights)(r, d) = s[d] / z;
            for (std::size_t j = 0; j < a; ++j) mixed(r, j) += s[d] / z * v(d, j);
        }
    }
    return linear_oracle(store, "attention.output", mixed);
}

}  // namespace

TEST(CodeAttention, MatchesNaiveOracle) {
    ParameterStore store;
    Rng rng(1);
    CodeAttention att(6, 4, store, rng);
    for (const char* n : {"attention.query.bias", "attention.key.bias", "attention.value.bias", "attention.output.bias"})
        store.get(n).value = random_array(1, store.get(n).value.cols(), rng);
    const Array syn = random_array(5, 6, rng), states = random_array(7, 6, rng);
    Tape tape(false);
    Array weights;
    const NoteProjection note = att.project_note(tape, tape.constant(states));
    const Array got = att.contextualize(tape, tape.constant(syn), note, ForwardMode::eval(), &weights).value();
    Array oracle_weights;
    const Array want = contextualize_oracle(store, syn, states, 4, &oracle_weights);
    EXPECT_LE(max_abs_diff(got, want), 1e-12);
    EXPECT_LE(max_abs_diff(weights, oracle_weights), 1e-12);
    for (std::size_t r = 0; r < weights.rows(); ++r) {
        double s = 0;
        for (std::size_t d = 0; d < weights.cols(); ++d) s += weights(r, d);
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(CodeAttention, SingleTokenNoteGetsAllTheWeight) {
    ParameterStore store;
    Rng rng(2);
    CodeAttention att(3, 2, store, rng);
    Tape tape(false);
    Array weights;
    const NoteProjection note = att.project_note(tape, tape.constant(random_array(1, 3, rng)));
    att.contextualize(tape, tape.constant(random_array(4, 3, rng)), note, ForwardMode::eval(), &weights);
    for (double w : weights.data()) EXPECT_EQ(w, 1.0);
}

TEST(CodeAttention, GradientsMatchFiniteDifferences) {
    ParameterStore store;
    Rng rng(3);
    CodeAttention att(4, 3, store, rng);
    const double err = op_gradient_error({random_array(4, 4, rng), random_array(5, 4, rng)},
                                         [&](Tape& t, const std::vector<Var>& x) {
                                             return att.contextualize(t, x[0], att.project_note(t, x[1]),
                                                                      ForwardMode::eval());
                                         });
    EXPECT_LE(err, 1e-6);
}

TEST(Pooling, MaxAndMeanPerCode) {
    const Array rows = Array::matrix(4, 2, {1, 5, 3, 2, -1, -4, -2, -3});
    Tape tape(false);
    EXPECT_EQ(pool_code(tape.constant(rows), 2).value(), Array::matrix(2, 2, {3, 5, -1, -3}));
    EXPECT_EQ(average_synonyms(tape.constant(rows), 2).value(), Array::matrix(2, 2, {2, 3.5, -1.5, -3.5}));
    EXPECT_THROW(pool_code(tape.constant(rows), 3), NumericError);
    EXPECT_EQ(synonym_groups(2, 3), (std::vector<std::vector<std::size_t>>{{0, 1, 2}, {3, 4, 5}}));
}

TEST(Heads, DirectProbabilityIsSigmoidOfRowDot) {
    Rng rng(4);
    const Array w = random_array(3, 5, rng), c = random_array(3, 5, rng);
    Tape tape(false);
    const Array p = direct_probability(tape.constant(w), tape.constant(c)).value();
    ASSERT_EQ(p.cols(), 1u);
    for (std::size_t i = 0; i < 3; ++i) {
        double dot = 0;
        for (std::size_t j = 0; j < 5; ++j) dot += w(i, j) * c(i, j);
        EXPECT_NEAR(p[i], 1.0 / (1.0 + std::exp(-dot)), 1e-15);
    }
}

TEST(Heads, AlphaAndBetaAreSeparateProjections) {
    ParameterStore store;
    Rng rng(5);
    PredictionHeads heads(4, store, rng);
    const Array x = random_array(2, 4, rng);
    Tape tape(false);
    EXPECT_LE(max_abs_diff(heads.alpha(tape, tape.constant(x)).value(), linear_oracle(store, "heads.alpha", x)),
              1e-15);
    EXPECT_LE(max_abs_diff(heads.beta(tape, tape.constant(x)).value(), linear_oracle(store, "heads.beta", x)), 1e-15);
    EXPECT_NE(store.get("heads.alpha.weight").value, store.get("heads.beta.weight").value);
}
