#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "corelation/gating_loss.hpp"
#include "corelation/metrics.hpp"
#include "corelation/model.hpp"
#include "corelation/optimizer.hpp"

namespace corelation {

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class TrainMode { full, selective };

TrainMode parse_train_mode(const std::string& text);
std::string to_string(TrainMode mode);

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t ks = 1000;  ///< selective mode: top and random codes per step
    double lambda = 0.01;   ///< weight of the gate penalty
    double rdrop = 5.0;     ///< weight of the R-Drop penalty
    double base_lr = 5e-4;
    std::size_t batch_size = 1;
    std::uint64_t seed = 1;
    TrainMode mode = TrainMode::full;
    /// Epochs without a strict validation Macro AUC improvement before stopping; 0 disables.
    std::size_t patience = 5;
    std::size_t threads = 1;  ///< validation workers

    void validate() const;
    std::string to_json() const;
    static TrainConfig from_json(const std::string& text);
};

/// Codes that receive gradients in one selective step.
struct SelectiveBatchPlan {
    std::vector<std::size_t> top;     ///< top-K_s by estimated score
    std::vector<std::size_t> random;  ///< K_s drawn from the rest without replacement
    std::vector<std::size_t> ground;  ///< gold codes
    std::vector<std::size_t> back;    ///< ascending union of the three
};

/// `estimated` holds one score per code. When ks >= N every code is kept.
SelectiveBatchPlan plan_selective(std::span<const double> estimated, std::span<const std::size_t> gold,
                                  std::size_t ks, Rng& rng);

struct StepResult {
    LossBreakdown loss;
    std::size_t evaluated_codes = 0;
};

struct BatchLoss {
    Var total;  ///< scalar on the tape
    LossBreakdown breakdown;
};

/// Mean over notes of l_ce + lambda * l_comp + rdrop * l_rdrop, evaluated over
/// `codes` (ascending) on `tape`. R-Drop runs a second pass only when `mode`
/// applies dropout. `first_index` is the dataset position of batch[0] for
/// error messages.
BatchLoss batch_loss(Tape& tape, const CoRelationModel& model, std::span<const NoteRecord> batch,
                     std::span<const std::size_t> codes, const TrainConfig& config, const ForwardMode& mode,
                     std::size_t first_index = 0);

/// One optimizer step per call, over a batch of notes.
class Trainer {
public:
    Trainer(CoRelationModel& model, const TrainConfig& config, std::size_t total_steps);

    /// `first_index` is the dataset position of batch[0], used in error messages.
    StepResult step(std::span<const NoteRecord> batch, std::size_t first_index = 0);

    const Adam& optimizer() const { return adam_; }

private:
    StepResult run(std::span<const NoteRecord> batch, std::span<const std::size_t> codes, std::size_t first_index);

    CoRelationModel& model_;
    TrainConfig config_;
    Adam adam_;
    Rng dropout_rng_;
    Rng sampling_rng_;
};

struct LogEntry {
    std::size_t epoch = 0;
    std::size_t step = 0;
    LossBreakdown loss;
    double lr = 0.0;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    std::optional<double> valid_macro_auc;
    double valid_micro_f1 = 0.0;
    bool improved = false;
};

struct TrainResult {
    std::vector<LogEntry> log;
    std::vector<EpochRecord> history;
    std::optional<double> best_valid_macro_auc;
    std::size_t best_epoch = 0;
    bool stopped_early = false;
};

/// Lines `epoch,step,l_ce,l_comp,l_rdrop,total,lr` with a header.
std::string format_log(std::span<const LogEntry> log);
std::string format_log_line(const LogEntry& entry);
std::string history_to_json(const TrainResult& result);

/// Return false to stop training after this epoch.
using EpochCallback = std::function<bool(const EpochRecord&)>;

/// Trains with early stopping on validation Macro AUC and leaves the best
/// parameters in `model` (the initial ones when no epoch improved).
TrainResult train(CoRelationModel& model, std::span<const NoteRecord> train_set,
                  std::span<const NoteRecord> valid_set, const TrainConfig& config, std::ostream* log = nullptr,
                  const EpochCallback& on_epoch = {});

/// Scores and labels of `notes` under `model`, for metric computation.
EvalBatch evaluate_batch(const CoRelationModel& model, std::span<const NoteRecord> notes, std::size_t threads = 1,
                         const ForwardOptions& options = {});

}  // namespace corelation
