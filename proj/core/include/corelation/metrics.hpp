#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "corelation/array.hpp"

namespace corelation {

class MetricError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Scores and 0/1 labels, one row per note and one column per code.
struct EvalBatch {
    Array scores;
    Array labels;

    void validate() const;
};

/// Rank-based (Mann-Whitney) AUC with tied scores counted one half.
/// Throws MetricError when the labels lack a positive or a negative.
double auc(std::span<const double> scores, std::span<const double> labels);

struct MacroAuc {
    std::optional<double> value;  ///< nullopt when no code has both classes
    std::size_t evaluated = 0;
    std::size_t skipped = 0;
};

/// Mean per-code AUC over codes that have both a positive and a negative note.
MacroAuc macro_auc(const EvalBatch& batch);
/// AUC over all flattened cells; throws MetricError if all cells share one class.
double micro_auc(const EvalBatch& batch);

struct F1Scores {
    double macro = 0.0;
    double micro = 0.0;
};

/// Predictions are score >= threshold. Per-code F1 with 0/0 = 0 enters the macro mean.
F1Scores f1(const EvalBatch& batch, double threshold = 0.5);

/// Hits among the k highest scores (ties by ascending index), divided by k.
double precision_at_k(std::span<const double> scores, std::span<const double> labels, std::size_t k);
double mean_precision_at_k(const EvalBatch& batch, std::size_t k);

struct MetricReport {
    std::optional<double> macro_auc;
    std::optional<double> micro_auc;
    double macro_f1 = 0.0;
    double micro_f1 = 0.0;
    std::map<std::size_t, double> precision_at;
    std::size_t macro_auc_skipped = 0;
};

/// All metrics at once. P@K entries with k > number of codes are omitted.
MetricReport evaluate_metrics(const EvalBatch& batch, std::span<const std::size_t> ks,
                              double threshold = 0.5);

/// Flat JSON object; undefined AUCs serialize as null.
std::string report_to_json(const MetricReport& report);
/// Aligned two-row table with Macro/Micro AUC, Macro/Micro F1 and P@K columns.
std::string format_report_table(const MetricReport& report);

}  // namespace corelation
