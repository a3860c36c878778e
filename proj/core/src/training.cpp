#include "corelation/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace corelation {

using nlohmann::json;

TrainMode parse_train_mode(const std::string& text) {
    if (text == "full") return TrainMode::full;
    if (text == "selective") return TrainMode::selective;
    throw std::invalid_argument("unknown training mode: " + text + " (expected full or selective)");
}

std::string to_string(TrainMode mode) { return mode == TrainMode::full ? "full" : "selective"; }

void TrainConfig::validate() const {
    if (batch_size == 0) throw std::invalid_argument("train config: batch_size must be positive");
    if (mode == TrainMode::selective && ks == 0) throw std::invalid_argument("train config: ks must be positive");
    if (!(lambda >= 0.0) || !(rdrop >= 0.0)) throw std::invalid_argument("train config: lambda and rdrop must be >= 0");
    if (!(base_lr >= 0.0)) throw std::invalid_argument("train config: base_lr must be >= 0");
}

std::string TrainConfig::to_json() const {
    nlohmann::ordered_json j;
    j["epochs"] = epochs;
    j["ks"] = ks;
    j["lambda"] = lambda;
    j["rdrop"] = rdrop;
    j["base_lr"] = base_lr;
    j["batch_size"] = batch_size;
    j["seed"] = seed;
    j["mode"] = to_string(mode);
    j["patience"] = patience;
    j["threads"] = threads;
    return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    const json j = json::parse(text);
    TrainConfig c;
    c.epochs = j.at("epochs").get<std::size_t>();
    c.ks = j.at("ks").get<std::size_t>();
    c.lambda = j.at("lambda").get<double>();
    c.rdrop = j.at("rdrop").get<double>();
    c.base_lr = j.at("base_lr").get<double>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.mode = parse_train_mode(j.at("mode").get<std::string>());
    c.patience = j.at("patience").get<std::size_t>();
    c.threads = j.at("threads").get<std::size_t>();
    c.validate();
    return c;
}

SelectiveBatchPlan plan_selective(std::span<const double> estimated, std::span<const std::size_t> gold,
                                  std::size_t ks, Rng& rng) {
    const std::size_t n = estimated.size();
    SelectiveBatchPlan plan;
    std::vector<bool> taken(n, false);
    for (std::size_t g : gold) {
        if (g >= n) throw std::out_of_range("plan_selective: gold code index out of range");
        if (!taken[g]) plan.ground.push_back(g);
        taken[g] = true;
    }
    if (ks >= n) {
        plan.back.resize(n);
        std::iota(plan.back.begin(), plan.back.end(), 0);
        plan.top = plan.back;
        return plan;
    }
    plan.top = select_top_k(estimated, ks).selected;
    for (std::size_t i : plan.top) taken[i] = true;
    std::vector<std::size_t> rest;
    rest.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        if (!taken[i]) rest.push_back(i);
    // Partial Fisher-Yates: the first ks entries become the sample.
    const std::size_t draws = std::min(ks, rest.size());
    for (std::size_t i = 0; i < draws; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(rest.size() - i));
        std::swap(rest[i], rest[j]);
        plan.random.push_back(rest[i]);
        taken[rest[i]] = true;
    }
    for (std::size_t i = 0; i < n; ++i)
        if (taken[i]) plan.back.push_back(i);
    return plan;
}

Trainer::Trainer(CoRelationModel& model, const TrainConfig& config, std::size_t total_steps)
    : model_(model),
      config_(config),
      adam_(AdamConfig{config.base_lr, 0.9, 0.999, 1e-8, total_steps}, model.parameters()),
      dropout_rng_(Rng::stream(config.seed, "dropout")),
      sampling_rng_(Rng::stream(config.seed, "sampling")) {
    config_.validate();
}

namespace {

std::vector<std::size_t> gold_indices(const NoteRecord& note, const CodeSpace& space) {
    std::vector<std::size_t> out;
    out.reserve(note.gold.size());
    for (const auto& c : note.gold) out.push_back(space.index_of(c));
    return out;
}

}  // namespace

StepResult Trainer::step(std::span<const NoteRecord> batch, std::size_t first_index) {
    if (batch.empty()) throw std::invalid_argument("train step: empty batch");
    const CodeSpace& space = model_.code_space();
    if (config_.mode == TrainMode::full || config_.ks >= space.size()) {
        std::vector<std::size_t> all(space.size());
        std::iota(all.begin(), all.end(), 0);
        return run(batch, all, first_index);
    }
    // Estimation pass: direct path only, no gradient recording.
    Tape estimate(false);
    const ForwardMode eval = ForwardMode::eval();
    const CodeContext ctx = model_.full_context(estimate, eval, true);
    std::vector<bool> keep(space.size(), false);
    ForwardOptions direct_only;
    direct_only.direct_only = true;
    for (const NoteRecord& note : batch) {
        const auto ids = model_.token_ids(note.tokens);
        const ForwardTrace trace = model_.forward(estimate, ctx, ids, eval, direct_only);
        const auto gold = gold_indices(note, space);
        const SelectiveBatchPlan plan = plan_selective(trace.direct.value().data(), gold, config_.ks, sampling_rng_);
        for (std::size_t i : plan.back) keep[i] = true;
    }
    std::vector<std::size_t> back;
    for (std::size_t i = 0; i < keep.size(); ++i)
        if (keep[i]) back.push_back(i);
    return run(batch, back, first_index);
}

BatchLoss batch_loss(Tape& tape, const CoRelationModel& model, std::span<const NoteRecord> batch,
                     std::span<const std::size_t> codes, const TrainConfig& config, const ForwardMode& mode,
                     std::size_t first_index) {
    if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
    const CodeSpace& space = model.code_space();
    const bool two_passes = config.rdrop > 0.0 && mode.training && mode.dropout > 0.0;
    std::vector<std::size_t> position(space.size(), codes.size());
    for (std::size_t p = 0; p < codes.size(); ++p) position[codes[p]] = p;

    BatchLoss result;
    std::size_t note_index = first_index;
    try {
        const CodeContext ctx = model.code_context(tape, codes, mode);
        for (const NoteRecord& note : batch) {
            Array labels = Array::matrix(codes.size(), 1);
            for (const auto& c : note.gold) {
                const std::size_t p = position[space.index_of(c)];
                if (p == codes.size()) throw TrainingError("gold code " + c + " missing from the evaluated codes");
                labels[p] = 1.0;
            }
            const auto ids = model.token_ids(note.tokens);
            const int passes = two_passes ? 2 : 1;
            std::vector<ForwardTrace> traces;
            Var l_ce, l_comp;
            for (int pass = 0; pass < passes; ++pass) {
                traces.push_back(model.forward(tape, ctx, ids, mode));
                const ForwardTrace& t = traces.back();
                Var ce = loss_ce(t.final, labels);
                l_ce = l_ce.valid() ? ad::add(l_ce, ce) : ce;
                if (t.gate.valid()) {
                    Var comp = loss_comp(t.gate, codes.size());
                    l_comp = l_comp.valid() ? ad::add(l_comp, comp) : comp;
                }
            }
            const double inv = 1.0 / passes;
            l_ce = ad::scale(l_ce, inv);
            Var note_total = l_ce;
            LossBreakdown lb;
            lb.l_ce = l_ce.value().item();
            if (l_comp.valid()) {
                l_comp = ad::scale(l_comp, inv);
                lb.l_comp = l_comp.value().item();
                if (config.lambda > 0.0) note_total = ad::add(note_total, ad::scale(l_comp, config.lambda));
            }
            if (two_passes) {
                Var rd = r_drop_penalty(traces[0].final, traces[1].final);
                lb.l_rdrop = rd.value().item();
                note_total = ad::add(note_total, ad::scale(rd, config.rdrop));
            }
            lb.total = note_total.value().item();
            if (!std::isfinite(lb.total)) throw NumericError("non-finite loss");
            result.breakdown.l_ce += lb.l_ce;
            result.breakdown.l_comp += lb.l_comp;
            result.breakdown.l_rdrop += lb.l_rdrop;
            result.breakdown.total += lb.total;
            result.total = result.total.valid() ? ad::add(result.total, note_total) : note_total;
            ++note_index;
        }
    } catch (const NumericError& e) {
        throw TrainingError("non-finite value at note index " + std::to_string(note_index) + ": " + e.what());
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    result.breakdown.l_ce *= inv;
    result.breakdown.l_comp *= inv;
    result.breakdown.l_rdrop *= inv;
    result.breakdown.total *= inv;
    result.total = ad::scale(result.total, inv);
    return result;
}

StepResult Trainer::run(std::span<const NoteRecord> batch, std::span<const std::size_t> codes,
                        std::size_t first_index) {
    const ForwardMode mode = ForwardMode::train(model_.config().dropout, dropout_rng_);
    Tape tape;
    BatchLoss loss = batch_loss(tape, model_, batch, codes, config_, mode, first_index);
    model_.parameters().zero_grad();
    tape.backward(loss.total);
    adam_.step(model_.parameters());
    return {loss.breakdown, codes.size()};
}

std::string format_log_line(const LogEntry& e) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%.17g,%.17g,%.17g", e.epoch, e.step, e.loss.l_ce,
                  e.loss.l_comp, e.loss.l_rdrop, e.loss.total, e.lr);
    return buf;
}

std::string format_log(std::span<const LogEntry> log) {
    std::string out = "epoch,step,l_ce,l_comp,l_rdrop,total,lr\n";
    for (const auto& e : log) out += format_log_line(e) + "\n";
    return out;
}

std::string history_to_json(const TrainResult& result) {
    nlohmann::ordered_json j;
    j["epochs"] = json::array();
    for (const auto& h : result.history) {
        nlohmann::ordered_json e;
        e["epoch"] = h.epoch;
        e["mean_loss"] = h.mean_loss;
        e["valid_macro_auc"] = h.valid_macro_auc ? json(*h.valid_macro_auc) : json(nullptr);
        e["valid_micro_f1"] = h.valid_micro_f1;
        e["improved"] = h.improved;
        j["epochs"].push_back(e);
    }
    j["best_valid_macro_auc"] = result.best_valid_macro_auc ? json(*result.best_valid_macro_auc) : json(nullptr);
    j["best_epoch"] = result.best_epoch;
    j["stopped_early"] = result.stopped_early;
    return j.dump(2);
}

EvalBatch evaluate_batch(const CoRelationModel& model, std::span<const NoteRecord> notes, std::size_t threads,
                         const ForwardOptions& options) {
    const CodeSpace& space = model.code_space();
    const auto scores = model.predict(notes, threads, options);
    EvalBatch batch{Array::matrix(notes.size(), space.size()), Array::matrix(notes.size(), space.size())};
    for (std::size_t r = 0; r < notes.size(); ++r) {
        std::copy(scores[r].begin(), scores[r].end(), batch.scores.row(r).begin());
        for (const auto& c : notes[r].gold) batch.labels(r, space.index_of(c)) = 1.0;
    }
    return batch;
}

TrainResult train(CoRelationModel& model, std::span<const NoteRecord> train_set,
                  std::span<const NoteRecord> valid_set, const TrainConfig& config, std::ostream* log,
                  const EpochCallback& on_epoch) {
    config.validate();
    TrainResult result;
    if (config.epochs == 0) return result;
    if (train_set.empty()) throw TrainingError("training split is empty");

    const std::size_t steps_per_epoch = (train_set.size() + config.batch_size - 1) / config.batch_size;
    Trainer trainer(model, config, steps_per_epoch * config.epochs);
    Rng order_rng = Rng::stream(config.seed, "shuffle");
    auto best = model.parameters().snapshot();
    double best_auc = -std::numeric_limits<double>::infinity();
    std::size_t stale = 0;
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    if (log) *log << "epoch,step,l_ce,l_comp,l_rdrop,total,lr\n";

    std::size_t global_step = 0;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        order_rng.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t s = 0; s < steps_per_epoch; ++s) {
            std::vector<NoteRecord> batch;
            const std::size_t begin = s * config.batch_size;
            const std::size_t end = std::min(begin + config.batch_size, order.size());
            for (std::size_t i = begin; i < end; ++i) batch.push_back(train_set[order[i]]);
            LogEntry entry;
            entry.epoch = epoch;
            entry.step = ++global_step;
            entry.lr = trainer.optimizer().learning_rate();
            entry.loss = trainer.step(batch, order[begin]).loss;
            loss_sum += entry.loss.total;
            if (log) *log << format_log_line(entry) << '\n';
            result.log.push_back(entry);
        }
        EpochRecord record;
        record.epoch = epoch;
        record.mean_loss = loss_sum / static_cast<double>(steps_per_epoch);
        if (!valid_set.empty()) {
            const EvalBatch eval = evaluate_batch(model, valid_set, config.threads);
            record.valid_macro_auc = macro_auc(eval).value;
            record.valid_micro_f1 = f1(eval).micro;
            const double auc_value = record.valid_macro_auc.value_or(-std::numeric_limits<double>::infinity());
            if (auc_value > best_auc) {
                best_auc = auc_value;
                best = model.parameters().snapshot();
                result.best_valid_macro_auc = record.valid_macro_auc;
                result.best_epoch = epoch;
                record.improved = true;
                stale = 0;
            } else {
                ++stale;
            }
        } else {
            best = model.parameters().snapshot();
            result.best_epoch = epoch;
        }
        result.history.push_back(record);
        const bool keep_going = on_epoch ? on_epoch(record) : true;
        if (!keep_going) break;
        if (config.patience > 0 && stale >= config.patience) {
            result.stopped_early = true;
            break;
        }
    }
    model.parameters().restore(best);
    return result;
}

}  // namespace corelation
