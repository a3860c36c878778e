#include "corelation/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace corelation {

namespace {

double evaluate(const LossBuilder& loss) {
    Tape tape(false);
    return loss(tape).value().item();
}

}  // namespace

GradCheckResult finite_difference_check(const LossBuilder& loss, const std::vector<Parameter*>& params,
                                        double h, Rng& rng, std::size_t coordinates) {
    if (!(h > 0.0)) throw NumericError("finite_difference_check: h must be positive");
    for (Parameter* p : params) p->zero_grad();
    {
        Tape tape;
        Var l = loss(tape);
        tape.backward(l);
    }

    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (std::size_t k = 0; k < params.size(); ++k)
        for (std::size_t i = 0; i < params[k]->value.size(); ++i) coords.emplace_back(k, i);
    if (coords.size() > coordinates) {
        rng.shuffle(coords);
        coords.resize(coordinates);
        std::sort(coords.begin(), coords.end());
    }

    GradCheckResult result;
    result.coordinates = coords.size();
    for (const auto& [k, i] : coords) {
        Parameter& p = *params[k];
        const double original = p.value[i];
        p.value[i] = original + h;
        const double plus = evaluate(loss);
        p.value[i] = original - h;
        const double minus = evaluate(loss);
        p.value[i] = original;

        const double numeric = (plus - minus) / (2.0 * h);
        const double analytic = p.grad[i];
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        const double err = std::abs(analytic - numeric) / denom;
        if (result.worst_parameter.empty() || err > result.max_relative_error) {
            result.max_relative_error = err;
            result.worst_parameter = p.name;
            result.worst_index = i;
            result.worst_analytic = analytic;
            result.worst_numeric = numeric;
        }
    }
    return result;
}

}  // namespace corelation
