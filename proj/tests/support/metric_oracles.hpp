#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <vector>

#include "corelation/metrics.hpp"
#include "corelation/rng.hpp"

namespace corelation::testing {

/// Fraction of (positive, negative) pairs ordered correctly, ties counting one half.
inline std::optional<double> auc_all_pairs(const std::vector<double>& s, const std::vector<double>& l) {
    double good = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (l[i] != 1.0) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (l[j] != 0.0) continue;
            pairs += 1.0;
            good += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
        }
    }
    if (pairs == 0.0) return std::nullopt;
    return good / pairs;
}

inline std::vector<double> column(const Array& a, std::size_t c) {
    std::vector<double> out(a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r) out[r] = a(r, c);
    return out;
}

inline std::optional<double> macro_auc_oracle(const EvalBatch& b) {
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < b.scores.cols(); ++c) {
        if (auto v = auc_all_pairs(column(b.scores, c), column(b.labels, c))) {
            total += *v;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return total / static_cast<double>(n);
}

inline std::optional<double> micro_auc_oracle(const EvalBatch& b) {
    return auc_all_pairs(b.scores.values(), b.labels.values());
}

struct Confusion {
    double tp = 0, fp = 0, fn = 0;
    double f1() const { return 2 * tp + fp + fn == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn); }
};

inline F1Scores f1_oracle(const EvalBatch& b, double threshold) {
    std::vector<Confusion> per(b.scores.cols());
    Confusion all;
    for (std::size_t r = 0; r < b.scores.rows(); ++r)
        for (std::size_t c = 0; c < b.scores.cols(); ++c) {
            const bool p = b.scores(r, c) >= threshold, g = b.labels(r, c) == 1.0;
            Confusion& k = per[c];
            if (p && g) ++k.tp, ++all.tp;
            if (p && !g) ++k.fp, ++all.fp;
            if (!p && g) ++k.fn, ++all.fn;
        }
    F1Scores out;
    for (const auto& k : per) out.macro += k.f1();
    out.macro /= static_cast<double>(per.size());
    out.micro = all.f1();
    return out;
}

/// Full stable sort by descending score; equal scores keep index order.
inline double precision_at_k_oracle(const std::vector<double>& s, const std::vector<double>& l, std::size_t k) {
    std::vector<std::size_t> order(s.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
    double hits = 0.0;
    for (std::size_t i = 0; i < k; ++i) hits += l[order[i]];
    return hits / static_cast<double>(k);
}

/// Random batch with coarse scores so that ties occur.
inline EvalBatch random_eval_batch(Rng& rng, std::size_t max_notes, std::size_t max_codes) {
    const std::size_t n = 1 + rng.below(max_notes), m = 1 + rng.below(max_codes);
    EvalBatch b{Array::matrix(n, m), Array::matrix(n, m)};
    const double density = 0.05 + 0.5 * rng.uniform();
    for (std::size_t i = 0; i < n * m; ++i) {
        b.scores[i] = static_cast<double>(rng.below(21)) / 20.0;
        b.labels[i] = rng.bernoulli(density) ? 1.0 : 0.0;
    }
    return b;
}

}  // namespace corelation::testing
