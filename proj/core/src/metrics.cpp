#include "corelation/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace corelation {

void EvalBatch::validate() const {
    if (!scores.same_shape(labels)) {
        throw MetricError("scores " + scores.shape_string() + " and labels " + labels.shape_string() +
                          " differ in shape");
    }
    for (double v : labels.data()) {
        if (v != 0.0 && v != 1.0) throw MetricError("labels must be 0 or 1");
    }
}

double auc(std::span<const double> scores, std::span<const double> labels) {
    if (scores.size() != labels.size()) throw MetricError("auc: scores and labels differ in length");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double positives = 0.0;
    double rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        // Average 1-based rank of the tie block [i, j].
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            if (labels[order[k]] == 1.0) {
                positives += 1.0;
                rank_sum += rank;
            }
        }
        i = j + 1;
    }
    const double negatives = static_cast<double>(n) - positives;
    if (positives == 0.0 || negatives == 0.0) throw MetricError("auc undefined: labels contain a single class");
    return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

MacroAuc macro_auc(const EvalBatch& batch) {
    batch.validate();
    MacroAuc out;
    const std::size_t notes = batch.scores.rows(), codes = batch.scores.cols();
    std::vector<double> s(notes), l(notes);
    double total = 0.0;
    for (std::size_t c = 0; c < codes; ++c) {
        double pos = 0.0;
        for (std::size_t r = 0; r < notes; ++r) {
            s[r] = batch.scores(r, c);
            l[r] = batch.labels(r, c);
            pos += l[r];
        }
        if (pos == 0.0 || pos == static_cast<double>(notes)) {
            ++out.skipped;
            continue;
        }
        total += auc(s, l);
        ++out.evaluated;
    }
    if (out.evaluated > 0) out.value = total / static_cast<double>(out.evaluated);
    return out;
}

double micro_auc(const EvalBatch& batch) {
    batch.validate();
    return auc(batch.scores.data(), batch.labels.data());
}

F1Scores f1(const EvalBatch& batch, double threshold) {
    batch.validate();
    if (!(threshold > 0.0 && threshold < 1.0)) throw MetricError("f1: threshold must lie in (0, 1)");
    const std::size_t notes = batch.scores.rows(), codes = batch.scores.cols();
    double tp_all = 0, fp_all = 0, fn_all = 0, macro = 0;
    for (std::size_t c = 0; c < codes; ++c) {
        double tp = 0, fp = 0, fn = 0;
        for (std::size_t r = 0; r < notes; ++r) {
            const bool pred = batch.scores(r, c) >= threshold;
            const bool gold = batch.labels(r, c) == 1.0;
            tp += pred && gold;
            fp += pred && !gold;
            fn += !pred && gold;
        }
        const double denom = 2 * tp + fp + fn;
        macro += denom == 0 ? 0.0 : 2 * tp / denom;
        tp_all += tp;
        fp_all += fp;
        fn_all += fn;
    }
    F1Scores out;
    out.macro = codes == 0 ? 0.0 : macro / static_cast<double>(codes);
    const double denom = 2 * tp_all + fp_all + fn_all;
    out.micro = denom == 0 ? 0.0 : 2 * tp_all / denom;
    return out;
}

double precision_at_k(std::span<const double> scores, std::span<const double> labels, std::size_t k) {
    if (scores.size() != labels.size()) throw MetricError("precision_at_k: length mismatch");
    if (k == 0 || k > scores.size()) {
        throw MetricError("precision_at_k: k=" + std::to_string(k) + " must lie in [1, " +
                          std::to_string(scores.size()) + "]");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
                      });
    double hits = 0.0;
    for (std::size_t i = 0; i < k; ++i) hits += labels[order[i]];
    return hits / static_cast<double>(k);
}

double mean_precision_at_k(const EvalBatch& batch, std::size_t k) {
    batch.validate();
    const std::size_t notes = batch.scores.rows();
    if (notes == 0) return 0.0;
    double total = 0.0;
    for (std::size_t r = 0; r < notes; ++r) total += precision_at_k(batch.scores.row(r), batch.labels.row(r), k);
    return total / static_cast<double>(notes);
}

MetricReport evaluate_metrics(const EvalBatch& batch, std::span<const std::size_t> ks, double threshold) {
    batch.validate();
    MetricReport report;
    const MacroAuc macro = macro_auc(batch);
    report.macro_auc = macro.value;
    report.macro_auc_skipped = macro.skipped;
    try {
        report.micro_auc = micro_auc(batch);
    } catch (const MetricError&) {
        report.micro_auc.reset();
    }
    const F1Scores f = f1(batch, threshold);
    report.macro_f1 = f.macro;
    report.micro_f1 = f.micro;
    for (std::size_t k : ks) {
        if (k >= 1 && k <= batch.scores.cols()) report.precision_at[k] = mean_precision_at_k(batch, k);
    }
    return report;
}

std::string report_to_json(const MetricReport& report) {
    nlohmann::ordered_json j;
    j["macro_auc"] = report.macro_auc ? nlohmann::ordered_json(*report.macro_auc) : nlohmann::ordered_json(nullptr);
    j["micro_auc"] = report.micro_auc ? nlohmann::ordered_json(*report.micro_auc) : nlohmann::ordered_json(nullptr);
    j["macro_f1"] = report.macro_f1;
    j["micro_f1"] = report.micro_f1;
    for (const auto& [k, v] : report.precision_at) j["p_at_" + std::to_string(k)] = v;
    j["macro_auc_skipped_codes"] = report.macro_auc_skipped;
    return j.dump(2);
}

std::string format_report_table(const MetricReport& report) {
    std::vector<std::pair<std::string, std::string>> cols;
    auto pct = [](double v) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(1) << 100.0 * v;
        return s.str();
    };
    cols.emplace_back("Macro AUC", report.macro_auc ? pct(*report.macro_auc) : "n/a");
    cols.emplace_back("Micro AUC", report.micro_auc ? pct(*report.micro_auc) : "n/a");
    cols.emplace_back("Macro F1", pct(report.macro_f1));
    cols.emplace_back("Micro F1", pct(report.micro_f1));
    for (const auto& [k, v] : report.precision_at) cols.emplace_back("P@" + std::to_string(k), pct(v));

    std::ostringstream head, body;
    for (std::size_t i = 0; i < cols.size(); ++i) {
        const std::size_t w = std::max(cols[i].first.size(), cols[i].second.size());
        const char* sep = i + 1 < cols.size() ? "  " : "";
        head << std::setw(static_cast<int>(w)) << cols[i].first << sep;
        body << std::setw(static_cast<int>(w)) << cols[i].second << sep;
    }
    return head.str() + "\n" + body.str() + "\n";
}

}  // namespace corelation
