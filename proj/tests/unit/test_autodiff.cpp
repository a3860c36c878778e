#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "corelation/autodiff.hpp"
#include "op_cases.hpp"
#include "oracles.hpp"

using namespace corelation;
using namespace corelation::testing;

namespace {

constexpr double kGradTol = 1e-6;

double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Straightforward per-sequence LSTM, written independently of the fused op.
Array lstm_reference(const Array& x, const Array& wi, const Array& wh, const Array& bias,
                     const SequenceLayout& layout, bool reverse) {
    const std::size_t hidden = wh.rows();
    Array out = Array::matrix(x.rows(), hidden);
    for (std::size_t b = 0; b < layout.batch(); ++b) {
        std::vector<double> h(hidden, 0.0), c(hidden, 0.0);
        const std::size_t len = layout.lengths[b];
        for (std::size_t s = 0; s < len; ++s) {
            const std::size_t t = reverse ? len - 1 - s : s;
            const std::size_t row = layout.row(t, b);
            std::vector<double> z(4 * hidden);
            for (std::size_t k = 0; k < 4 * hidden; ++k) {
                double v = bias[k];
                for (std::size_t p = 0; p < x.cols(); ++p) v += x(row, p) * wi(p, k);
                for (std::size_t p = 0; p < hidden; ++p) v += h[p] * wh(p, k);
                z[k] = v;
            }
            for (std::size_t j = 0; j < hidden; ++j) {
                const double i = sigmoid_ref(z[j]);
                const double f = sigmoid_ref(z[hidden + j]);
                const double g = std::tanh(z[2 * hidden + j]);
                const double o = sigmoid_ref(z[3 * hidden + j]);
                c[j] = f * c[j] + i * g;
                h[j] = o * std::tanh(c[j]);
                out(row, j) = h[j];
            }
        }
    }
    return out;
}

}  // namespace

TEST(Array, MatrixViewOfLowRanks) {
    EXPECT_EQ(Array::scalar(3.0).rows(), 1u);
    EXPECT_EQ(Array::scalar(3.0).cols(), 1u);
    Array v({4});
    EXPECT_EQ(v.rows(), 1u);
    EXPECT_EQ(v.cols(), 4u);
    Array t({2, 3, 4});
    EXPECT_EQ(t.rows(), 6u);
    EXPECT_EQ(t.cols(), 4u);
}

TEST(Array, AllFiniteDetectsNaNAndInf) {
    Array a = Array::matrix(2, 2, 1.0);
    EXPECT_TRUE(a.all_finite());
    a(1, 1) = std::nan("");
    EXPECT_FALSE(a.all_finite());
    a(1, 1) = INFINITY;
    EXPECT_FALSE(a.all_finite());
}

TEST(Autodiff, MatmulMatchesTripleLoop) {
    Rng rng(1);
    const Array a = random_array(3, 4, rng), b = random_array(4, 5, rng);
    Tape tape(false);
    const Array& got = ad::matmul(tape.constant(a), tape.constant(b)).value();
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < 4; ++k) s += a(i, k) * b(k, j);
            EXPECT_NEAR(got(i, j), s, 1e-14);
        }
}

TEST(Autodiff, ShapeMismatchThrows) {
    Tape tape;
    EXPECT_THROW(ad::matmul(tape.constant(Array::matrix(2, 3)), tape.constant(Array::matrix(2, 3))), NumericError);
    EXPECT_THROW(ad::add(tape.constant(Array::matrix(2, 3)), tape.constant(Array::matrix(3, 2))), NumericError);
}

TEST(Autodiff, NonFiniteConstantRejected) {
    Tape tape;
    Array a = Array::matrix(1, 2);
    a[1] = std::nan("");
    EXPECT_THROW(tape.constant(a), NumericError);
}

TEST(Autodiff, NoGradTapeKeepsValuesButNotGradients) {
    Parameter p{"w", Array::matrix(2, 2, 0.5), Array()};
    Tape tape(false);
    Var y = ad::sum(ad::mul(tape.parameter(p), tape.parameter(p)));
    EXPECT_DOUBLE_EQ(y.value().item(), 1.0);
    EXPECT_FALSE(tape.requires_grad(y));
}

TEST(Autodiff, ParameterNodeIsSharedAndGradientsAccumulate) {
    Parameter p{"w", Array::matrix(1, 3, 2.0), Array()};
    p.zero_grad();
    Tape tape;
    Var a = tape.parameter(p);
    Var b = tape.parameter(p);
    EXPECT_EQ(a.id(), b.id());
    // d/dw sum(w * w) = 2w
    tape.backward(ad::sum(ad::mul(a, b)));
    for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(p.grad[i], 4.0);
    Tape again;
    again.backward(ad::sum(again.parameter(p)));
    for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(p.grad[i], 5.0);
}

TEST(Autodiff, ElementwiseValues) {
    Tape tape(false);
    Var x = tape.constant(Array::matrix(1, 3, {-1.0, 0.0, 2.0}));
    const Array s = ad::sigmoid(x).value();
    EXPECT_NEAR(s[0], sigmoid_ref(-1.0), 1e-15);
    EXPECT_DOUBLE_EQ(s[1], 0.5);
    const Array r = ad::relu(x).value();
    EXPECT_EQ(r[0], 0.0);
    EXPECT_EQ(r[2], 2.0);
    const Array g = ad::gelu(x).value();
    EXPECT_NEAR(g[0], -1.0 * 0.5 * std::erfc(1.0 / std::sqrt(2.0)), 1e-15);
    EXPECT_EQ(g[1], 0.0);
    const Array c = ad::clamp(x, -0.5, 1.0).value();
    EXPECT_EQ(c[0], -0.5);
    EXPECT_EQ(c[2], 1.0);
    const Array a = ad::affine(x, 2.0, 1.0).value();
    EXPECT_EQ(a[0], -1.0);
    EXPECT_EQ(a[2], 5.0);
}

TEST(Autodiff, SoftmaxRowsSumToOneAndSurviveLargeInputs) {
    Tape tape(false);
    Array big = Array::matrix(2, 3, {1000.0, 1001.0, 999.0, -5.0, -5.0, -5.0});
    const Array s = ad::softmax_rows(tape.constant(big)).value();
    for (std::size_t r = 0; r < 2; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < 3; ++c) sum += s(r, c);
        EXPECT_NEAR(sum, 1.0, 1e-15);
    }
    EXPECT_NEAR(s(1, 0), 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(s(0, 1) / s(0, 0), std::exp(1.0), 1e-12);
}

TEST(Autodiff, LayerNormRowsHaveZeroMeanUnitVariance) {
    Rng rng(3);
    Tape tape(false);
    const Array y = ad::layer_norm_rows(tape.constant(random_array(4, 7, rng, -3, 3)), 0.0).value();
    for (std::size_t r = 0; r < 4; ++r) {
        double m = 0.0, v = 0.0;
        for (std::size_t c = 0; c < 7; ++c) m += y(r, c);
        m /= 7;
        for (std::size_t c = 0; c < 7; ++c) v += (y(r, c) - m) * (y(r, c) - m);
        EXPECT_NEAR(m, 0.0, 1e-12);
        EXPECT_NEAR(v / 7, 1.0, 1e-12);
    }
}

TEST(Autodiff, GroupMaxTiesTakeTheFirstRow) {
    Parameter p{"x", Array::matrix(3, 1, {2.0, 2.0, 1.0}), Array()};
    p.zero_grad();
    Tape tape;
    Var m = ad::group_max(tape.parameter(p), {{0, 1, 2}});
    EXPECT_EQ(m.value().item(), 2.0);
    tape.backward(ad::sum(m));
    EXPECT_EQ(p.grad[0], 1.0);
    EXPECT_EQ(p.grad[1], 0.0);
    EXPECT_EQ(p.grad[2], 0.0);
}

TEST(Autodiff, ScatterReplacesOnlyListedRows) {
    Tape tape(false);
    Var base = tape.constant(Array::matrix(4, 1, {1, 2, 3, 4}));
    Var vals = tape.constant(Array::matrix(2, 1, {10, 30}));
    const std::vector<std::size_t> rows{0, 2};
    const Array out = ad::scatter_rows(base, rows, vals).value();
    EXPECT_EQ(out.values(), (std::vector<double>{10, 2, 30, 4}));
}

TEST(Autodiff, DropoutIsInvertedAndZeroRateIsIdentity) {
    Rng rng(11);
    Tape tape(false);
    Var x = tape.constant(Array::matrix(1, 20000, 1.0));
    const Array y = ad::dropout(x, 0.25, rng).value();
    double mean = 0.0;
    std::size_t zeros = 0;
    for (double v : y.data()) {
        mean += v;
        if (v == 0.0) ++zeros;
        else EXPECT_DOUBLE_EQ(v, 1.0 / 0.75);
    }
    EXPECT_NEAR(mean / 20000, 1.0, 0.02);
    EXPECT_NEAR(static_cast<double>(zeros) / 20000, 0.25, 0.01);
    EXPECT_EQ(ad::dropout(x, 0.0, rng).value(), x.value());
}

TEST(Autodiff, BinaryCrossEntropyMatchesFormula) {
    Tape tape(false);
    Var p = tape.constant(Array::matrix(3, 1, {0.9, 0.2, 0.0}));
    const Array labels = Array::matrix(3, 1, {1, 0, 1});
    const double expected = -(std::log(0.9) + std::log(0.8) + std::log(1e-10)) / 3.0;
    EXPECT_NEAR(ad::binary_cross_entropy(p, labels).value().item(), expected, 1e-12);
}

TEST(Autodiff, SymmetricKlIsZeroOnEqualInputsAndSymmetric) {
    Tape tape(false);
    Var p = tape.constant(Array::matrix(2, 1, {0.3, 0.8}));
    Var q = tape.constant(Array::matrix(2, 1, {0.6, 0.1}));
    EXPECT_EQ(ad::symmetric_bernoulli_kl(p, p).value().item(), 0.0);
    EXPECT_DOUBLE_EQ(ad::symmetric_bernoulli_kl(p, q).value().item(), ad::symmetric_bernoulli_kl(q, p).value().item());
    auto kl = [](double a, double b) { return a * std::log(a / b) + (1 - a) * std::log((1 - a) / (1 - b)); };
    const double expected = 0.5 * ((kl(0.3, 0.6) + kl(0.6, 0.3)) + (kl(0.8, 0.1) + kl(0.1, 0.8))) / 2.0;
    EXPECT_NEAR(ad::symmetric_bernoulli_kl(p, q).value().item(), expected, 1e-12);
}

TEST(Autodiff, LstmMatchesReferenceInBothDirections) {
    Rng rng(7);
    SequenceLayout layout{4, {4, 2, 3}};
    const Array x = random_array(12, 3, rng);
    const Array wi = random_array(3, 8, rng), wh = random_array(2, 8, rng), b = random_array(1, 8, rng);
    for (bool reverse : {false, true}) {
        Tape tape(false);
        const Array got = ad::lstm(tape.constant(x), tape.constant(wi), tape.constant(wh), tape.constant(b),
                                   layout, reverse).value();
        EXPECT_LT(max_abs_diff(got, lstm_reference(x, wi, wh, b, layout, reverse)), 1e-14) << reverse;
    }
}

TEST(Autodiff, LstmPaddingDoesNotLeakAcrossSequences) {
    Rng rng(8);
    const Array wi = random_array(2, 12, rng), wh = random_array(3, 12, rng), b = random_array(1, 12, rng);
    const Array short_x = random_array(2, 2, rng);
    // The short sequence alone...
    Tape t1(false);
    const Array alone = ad::lstm(t1.constant(short_x), t1.constant(wi), t1.constant(wh), t1.constant(b),
                                 SequenceLayout{2, {2}}, true).value();
    // ...and batched next to a longer one.
    SequenceLayout layout{5, {5, 2}};
    Array x = random_array(10, 2, rng);
    for (std::size_t t = 0; t < 2; ++t)
        for (std::size_t c = 0; c < 2; ++c) x(layout.row(t, 1), c) = short_x(t, c);
    Tape t2(false);
    const Array batched =
        ad::lstm(t2.constant(x), t2.constant(wi), t2.constant(wh), t2.constant(b), layout, true).value();
    for (std::size_t t = 0; t < 2; ++t)
        for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(batched(layout.row(t, 1), j), alone(t, j));
    for (std::size_t t = 2; t < 5; ++t)
        for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(batched(layout.row(t, 1), j), 0.0);
}

// ---- gradients of every differentiable op against independent central differences

class OpGradient : public ::testing::TestWithParam<GradCase> {};

TEST_P(OpGradient, MatchesCentralDifferences) {
    const GradCase& c = GetParam();
    Rng rng(42);
    std::vector<Array> inputs;
    for (auto [r, k] : c.shapes) inputs.push_back(random_array(r, k, rng, c.lo, c.hi));
    EXPECT_LT(op_gradient_error(inputs, c.op), kGradTol) << c.name;
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::ValuesIn(grad_cases()),
                         [](const ::testing::TestParamInfo<GradCase>& info) { return std::string(info.param.name); });
