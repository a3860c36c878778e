#include "commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>
#include <sstream>

#include "corelation/diagnostics.hpp"
#include "corelation/metrics.hpp"
#include "corelation/parameters.hpp"

namespace corelation::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// key, default, help
struct KeySpec {
    const char* key;
    const char* fallback;
    const char* help;
};

const std::vector<KeySpec>& key_specs() {
    static const std::vector<KeySpec> specs = {
        // paths
        {"codes", "", "target code list, one per line (default: description order)"},
        {"ontology", "", "hierarchy file, child<TAB>parent per line"},
        {"descriptions", "", "descriptions file, code<TAB>syn1|syn2"},
        {"train", "", "training split (JSON lines)"},
        {"valid", "", "validation split (JSON lines)"},
        {"dataset", "", "split to evaluate, predict or explain"},
        {"checkpoint", "", "model checkpoint"},
        {"predictions", "", "predictions file to score instead of a checkpoint"},
        {"embeddings", "", "pretrained word vectors, `token v1 v2 ...` per line"},
        {"output_dir", "", "directory for outputs"},
        // training
        {"epochs", "30", ""},
        {"ks", "1000", "selective mode: top and random codes per step"},
        {"lambda", "0.01", "gate penalty weight"},
        {"rdrop", "5.0", "R-Drop weight"},
        {"base_lr", "5e-4", ""},
        {"batch_size", "1", ""},
        {"seed", "1", ""},
        {"mode", "full", "full | selective"},
        {"patience", "5", "0 disables early stopping"},
        {"threads", "1", "validation and prediction workers"},
        // model
        {"embed_dim", "100", ""},
        {"hidden_dim", "512", ""},
        {"bidirectional", "true", ""},
        {"output_dim", "512", ""},
        {"attention_dim", "256", ""},
        {"edge_dim", "64", ""},
        {"graph_layers", "1", ""},
        {"ffn_dim", "1024", ""},
        {"top_k", "50", "codes entering the relation graph"},
        {"dropout", "0.1", ""},
        {"max_note_tokens", "4000", ""},
        {"max_synonym_tokens", "32", ""},
        {"no_relation", "false", ""},
        {"no_context", "false", ""},
        {"no_saa", "false", ""},
        // code space
        {"synonyms_per_code", "8", "M"},
        {"distance_cap", "6", "largest distinct hop-distance bucket"},
        // evaluation and reports
        {"eval_k", "5,8,15", "P@K cut-offs"},
        {"threshold", "0.5", "F1 decision threshold"},
        {"top", "0", "predict: codes kept per note, 0 for all"},
        {"note", "", "note id (default: first record)"},
        {"code", "", "explain: target code"},
        // synthetic corpus
        {"num_codes", "30", ""},
        {"num_majors", "6", ""},
        {"majors_per_chapter", "3", ""},
        {"keywords_per_code", "2", ""},
        {"codes_per_note", "3.0", ""},
        {"implications", "", "trigger>implied:prob,... (code indices)"},
        {"exclusions", "", "a-b,... (code indices)"},
        {"silent_implied", "true", ""},
        {"note_length_min", "12", ""},
        {"note_length_max", "24", ""},
        {"noise_vocab", "200", ""},
        {"num_notes", "100", ""},
        {"valid_fraction", "0.1", ""},
        {"test_fraction", "0.1", ""},
        // gradient check
        {"check", "pipeline", "pipeline | linear"},
        {"fd_step", "1e-3", "finite-difference step"},
        {"coordinates", "512", "checked coordinates"},
        {"tolerance", "1e-4", "largest accepted relative error"},
    };
    return specs;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) {
        cur = trim(cur);
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

std::size_t parse_size(const std::string& key, const std::string& text) {
    std::size_t v = 0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end) throw CommandError("config", key + ": expected a non-negative integer, got '" + text + "'");
    return v;
}

double parse_double(const std::string& key, const std::string& text) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used == text.size()) return v;
    } catch (const std::exception&) {
    }
    throw CommandError("config", key + ": expected a number, got '" + text + "'");
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CommandError("io", "cannot write " + path.string());
    out << text;
    if (!out) throw CommandError("io", "failed writing " + path.string());
}

std::string read_file(const std::string& key, const std::string& path) {
    if (path.empty()) throw CommandError("config", "missing required setting: " + key);
    try {
        return read_text_file(path);
    } catch (const std::exception& e) {
        throw CommandError("io", e.what());
    }
}

fs::path output_dir(const RunConfig& config) {
    if (!config.has_value("output_dir")) throw CommandError("config", "missing required setting: output_dir");
    fs::path dir = config.get("output_dir");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw CommandError("io", "cannot create " + dir.string() + ": " + ec.message());
    return dir;
}

void echo_config(const RunConfig& config, const fs::path& dir) { write_file(dir / "config.txt", config.to_text()); }

// Code space inputs, kept verbatim so a checkpoint can rebuild the space alone.
struct SpaceSource {
    std::vector<CodeId> targets;
    std::string hierarchy;
    std::string descriptions;
    CodeSpace::Options options;

    std::unique_ptr<CodeSpace> build() const {
        return std::make_unique<CodeSpace>(
            CodeSpace::build(targets, parse_descriptions(descriptions), hierarchy, options));
    }
};

SpaceSource space_from_config(const RunConfig& config) {
    SpaceSource s;
    s.descriptions = read_file("descriptions", config.get("descriptions"));
    s.hierarchy = config.has_value("ontology") ? read_file("ontology", config.get("ontology")) : std::string();
    if (config.has_value("codes")) {
        s.targets = parse_code_list(read_file("codes", config.get("codes")));
    } else {
        s.targets = parse_descriptions(s.descriptions).order;
    }
    s.options = config.space_options();
    return s;
}

json space_to_json(const SpaceSource& s) {
    json j;
    j["targets"] = s.targets;
    j["hierarchy"] = s.hierarchy;
    j["descriptions"] = s.descriptions;
    j["synonyms_per_code"] = s.options.synonyms_per_code;
    j["max_synonym_tokens"] = s.options.max_synonym_tokens;
    j["distance_cap"] = s.options.distance_cap;
    return j;
}

SpaceSource space_from_json(const json& j) {
    SpaceSource s;
    s.targets = j.at("targets").get<std::vector<CodeId>>();
    s.hierarchy = j.at("hierarchy").get<std::string>();
    s.descriptions = j.at("descriptions").get<std::string>();
    s.options.synonyms_per_code = j.at("synonyms_per_code").get<std::size_t>();
    s.options.max_synonym_tokens = j.at("max_synonym_tokens").get<std::size_t>();
    s.options.distance_cap = j.at("distance_cap").get<std::size_t>();
    return s;
}

// The space must outlive the model, so it is declared first.
struct LoadedModel {
    std::unique_ptr<CodeSpace> space;
    std::unique_ptr<CoRelationModel> model;
};

LoadedModel load_model(const RunConfig& config) {
    if (!config.has_value("checkpoint")) throw CommandError("config", "missing required setting: checkpoint");
    const fs::path path = config.get("checkpoint");
    if (!fs::exists(path)) throw CommandError("io", "checkpoint not found: " + path.string());
    LoadedModel out;
    try {
        const json manifest = json::parse(read_checkpoint(path).manifest_json);
        out.space = space_from_json(manifest.at("extra").at("code_space")).build();
        out.model = CoRelationModel::load(path, *out.space);
    } catch (const CommandError&) {
        throw;
    } catch (const std::exception& e) {
        throw CommandError("checkpoint", path.string() + ": " + e.what());
    }
    out.model->mutable_config().ablations = config.model_config().ablations;
    return out;
}

std::vector<NoteRecord> load_split(const RunConfig& config, const std::string& key, const CodeSpace& space) {
    if (!config.has_value(key)) throw CommandError("config", "missing required setting: " + key);
    const fs::path path = config.get(key);
    if (!fs::exists(path)) throw CommandError("io", key + " file not found: " + path.string());
    return load_dataset(path, space);
}

const NoteRecord& pick_note(const std::vector<NoteRecord>& notes, const RunConfig& config) {
    if (notes.empty()) throw CommandError("data", "dataset is empty");
    if (!config.has_value("note")) return notes.front();
    for (const auto& n : notes)
        if (n.id == config.get("note")) return n;
    throw CommandError("data", "note not found: " + config.get("note"));
}

std::string fmt(double v, int digits = 4) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

// ---------------------------------------------------------------- commands

int cmd_gen_data(const RunConfig& config, std::ostream& out) {
    const SyntheticSpec spec = config.synthetic_spec();
    const SyntheticCorpus corpus = generate_synthetic(spec);
    const fs::path dir = output_dir(config);
    const double fv = config.get_double("valid_fraction"), ft = config.get_double("test_fraction");
    if (fv < 0 || ft < 0 || fv + ft >= 1.0) throw CommandError("config", "valid_fraction + test_fraction must lie in [0, 1)");
    const std::size_t n = corpus.notes.size();
    const auto n_valid = static_cast<std::size_t>(std::floor(fv * static_cast<double>(n)));
    const auto n_test = static_cast<std::size_t>(std::floor(ft * static_cast<double>(n)));
    const std::size_t n_train = n - n_valid - n_test;
    std::span<const NoteRecord> all(corpus.notes);

    std::string codes;
    for (const auto& c : corpus.codes) codes += c + "\n";
    write_file(dir / "codes.txt", codes);
    write_file(dir / "ontology.tsv", corpus.hierarchy_text);
    write_file(dir / "descriptions.tsv", corpus.descriptions_text);
    write_dataset(dir / "train.jsonl", all.subspan(0, n_train));
    write_dataset(dir / "valid.jsonl", all.subspan(n_train, n_valid));
    write_dataset(dir / "test.jsonl", all.subspan(n_train + n_valid, n_test));
    echo_config(config, dir);
    out << "wrote " << corpus.codes.size() << " codes and " << n_train << "/" << n_valid << "/" << n_test
        << " train/valid/test notes to " << dir.string() << "\n";
    return 0;
}

int cmd_train(const RunConfig& config, std::ostream& out) {
    const ModelConfig mc = config.model_config();
    const TrainConfig tc = config.train_config();
    const fs::path dir = output_dir(config);
    const SpaceSource source = space_from_config(config);
    const auto space = source.build();
    const auto train_set = load_split(config, "train", *space);
    std::vector<NoteRecord> valid_set;
    if (config.has_value("valid")) valid_set = load_split(config, "valid", *space);

    CoRelationModel model(mc, *space, build_vocabulary(*space, train_set), tc.seed);
    if (config.has_value("embeddings")) {
        const std::size_t found = model.encoder().load_pretrained(config.get("embeddings"), model.vocabulary());
        out << "loaded " << found << " pretrained vectors\n";
    }
    echo_config(config, dir);

    std::ofstream log(dir / "loss_log.csv");
    if (!log) throw CommandError("io", "cannot write " + (dir / "loss_log.csv").string());
    const TrainResult result = train(model, train_set, valid_set, tc, &log, [&](const EpochRecord& r) {
        out << "epoch " << r.epoch << " loss " << fmt(r.mean_loss);
        if (!valid_set.empty()) {
            out << " valid_macro_auc " << (r.valid_macro_auc ? fmt(*r.valid_macro_auc) : std::string("n/a"))
                << " valid_micro_f1 " << fmt(r.valid_micro_f1) << (r.improved ? " *" : "");
        }
        out << "\n";
        return true;
    });

    json extra;
    extra["code_space"] = space_to_json(source);
    extra["train_config"] = json::parse(tc.to_json());
    extra["best_epoch"] = result.best_epoch;
    model.save(dir / "model.ckpt", extra.dump());
    write_file(dir / "history.json", history_to_json(result));
    out << "saved " << (dir / "model.ckpt").string() << " (best epoch " << result.best_epoch << ")\n";
    return 0;
}

EvalBatch batch_from_predictions(const RunConfig& config) {
    const std::string text = read_file("predictions", config.get("predictions"));
    std::vector<std::pair<std::string, std::map<std::string, double>>> rows;
    std::vector<std::string> universe;
    if (config.has_value("codes")) universe = parse_code_list(read_file("codes", config.get("codes")));
    const bool fixed = !universe.empty();
    std::set<std::string> seen(universe.begin(), universe.end());
    std::istringstream in(text);
    std::string line;
    std::size_t ln = 0;
    while (std::getline(in, line)) {
        ++ln;
        if (trim(line).empty()) continue;
        try {
            const json j = json::parse(line);
            std::map<std::string, double> scores;
            for (const auto& e : j.at("codes")) {
                const std::string code = e.at("code").get<std::string>();
                scores[code] = e.at("p").get<double>();
                if (!fixed && seen.insert(code).second) universe.push_back(code);
            }
            rows.emplace_back(j.at("id").get<std::string>(), std::move(scores));
        } catch (const json::exception& e) {
            throw CommandError("data", "predictions line " + std::to_string(ln) + ": " + e.what());
        }
    }
    if (!fixed) std::sort(universe.begin(), universe.end());

    // Gold codes come from the dataset, matched by note id.
    const std::string data = read_file("dataset", config.get("dataset"));
    const auto notes = parse_dataset(data, {});
    std::map<std::string, const NoteRecord*> by_id;
    for (const auto& n : notes) by_id[n.id] = &n;
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < universe.size(); ++i) col[universe[i]] = i;

    EvalBatch batch{Array::matrix(rows.size(), universe.size()), Array::matrix(rows.size(), universe.size())};
    for (std::size_t r = 0; r < rows.size(); ++r) {
        auto it = by_id.find(rows[r].first);
        if (it == by_id.end()) throw CommandError("data", "no gold record for predicted note " + rows[r].first);
        for (const auto& [code, p] : rows[r].second)
            if (col.count(code)) batch.scores(r, col[code]) = p;
        for (const auto& g : it->second->gold) {
            auto c = col.find(g);
            if (c == col.end()) throw CommandError("data", "gold code " + g + " of note " + rows[r].first + " has no prediction column");
            batch.labels(r, c->second) = 1.0;
        }
    }
    return batch;
}

int cmd_evaluate(const RunConfig& config, std::ostream& out) {
    EvalBatch batch;
    if (config.has_value("predictions")) {
        batch = batch_from_predictions(config);
    } else {
        const LoadedModel lm = load_model(config);
        const auto notes = load_split(config, "dataset", *lm.space);
        batch = evaluate_batch(*lm.model, notes, config.get_size("threads"));
    }
    if (batch.scores.rows() == 0) throw CommandError("data", "nothing to evaluate");
    for (double v : batch.scores.data())
        if (!std::isfinite(v)) throw CommandError("numeric", "non-finite score in predictions");
    const auto ks = config.get_size_list("eval_k");
    const MetricReport report = evaluate_metrics(batch, ks, config.get_double("threshold"));
    out << format_report_table(report);
    if (config.has_value("output_dir")) {
        const fs::path dir = output_dir(config);
        write_file(dir / "report.json", report_to_json(report) + "\n");
        echo_config(config, dir);
    }
    return 0;
}

int cmd_predict(const RunConfig& config, std::ostream& out) {
    const LoadedModel lm = load_model(config);
    const auto notes = load_split(config, "dataset", *lm.space);
    const auto probs = lm.model->predict(notes, config.get_size("threads"));
    const fs::path dir = output_dir(config);
    const std::size_t top = config.get_size("top");
    std::ostringstream lines;
    for (std::size_t n = 0; n < notes.size(); ++n) {
        const auto& p = probs[n];
        for (double v : p)
            if (!std::isfinite(v)) throw CommandError("numeric", "non-finite probability for note " + notes[n].id);
        std::vector<std::size_t> order(p.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
        if (top > 0 && top < order.size()) order.resize(top);
        json j;
        j["id"] = notes[n].id;
        j["codes"] = json::array();
        for (std::size_t i : order) j["codes"].push_back({{"code", lm.space->code(i)}, {"p", p[i]}});
        lines << j.dump() << "\n";
    }
    write_file(dir / "predictions.jsonl", lines.str());
    echo_config(config, dir);
    out << "wrote predictions for " << notes.size() << " notes to " << (dir / "predictions.jsonl").string() << "\n";
    return 0;
}

std::string bucket_label(std::size_t b, const EdgeTypeTable& table) {
    if (b == table.sentinel_unrelated()) return "unrelated";
    if (b == table.cap()) return ">=" + std::to_string(b);
    return std::to_string(b);
}

int cmd_graph_stats(const RunConfig& config, std::ostream& out) {
    LoadedModel lm;
    std::vector<NoteRecord> notes;
    if (config.has_value("checkpoint")) {
        lm = load_model(config);
        if (config.has_value("dataset")) notes = load_split(config, "dataset", *lm.space);
    } else {
        lm.space = space_from_config(config).build();
        if (config.has_value("dataset")) notes = load_split(config, "dataset", *lm.space);
        lm.model = std::make_unique<CoRelationModel>(config.model_config(), *lm.space,
                                                     build_vocabulary(*lm.space, notes), config.get_size("seed"));
    }
    const CodeSpace& space = *lm.space;
    const std::size_t a = space.majors().count();
    const std::size_t k = std::min(lm.model->config().top_k, space.size());

    RelationGraph graph;
    std::string source;
    if (!notes.empty()) {
        const NoteRecord& note = pick_note(notes, config);
        Tape tape(false);
        const ForwardMode mode = ForwardMode::eval();
        const CodeContext ctx = lm.model->full_context(tape, mode);
        const ForwardTrace trace = lm.model->forward(tape, ctx, lm.model->token_ids(note.tokens), mode);
        if (!trace.has_relation()) throw CommandError("config", "the relation path is disabled (no_relation)");
        graph = trace.graph;
        source = "note " + note.id;
    } else {
        std::vector<std::size_t> lowers(k);
        std::iota(lowers.begin(), lowers.end(), 0);
        graph = build_relation_graph(lowers, space);
        source = "first " + std::to_string(k) + " codes (no dataset given)";
    }

    out << "graph for " << source << "\n";
    out << "majors (A)      " << a << "\n";
    out << "selected (K)    " << graph.lowers.size() << "\n";
    out << "edges (A x K)   " << edge_count(a, graph.lowers.size()) << "\n";
    out << "edge types\n";
    const auto hist = graph.histogram();
    for (std::size_t b = 0; b < hist.size(); ++b)
        out << "  " << std::left << std::setw(12) << bucket_label(b, space.edge_types()) << hist[b] << "\n";
    const std::size_t e_r = lm.model->config().edge_dim;
    out << "edge embedding floats (A x K x " << e_r << ")\n";
    for (std::size_t kk : {50, 100, 200, 300})
        out << "  K=" << std::left << std::setw(6) << kk << edge_memory_proxy(a, kk, e_r) << "\n";
    return 0;
}

int cmd_explain(const RunConfig& config, std::ostream& out) {
    const LoadedModel lm = load_model(config);
    const auto notes = load_split(config, "dataset", *lm.space);
    const NoteRecord& note = pick_note(notes, config);
    if (!config.has_value("code")) throw CommandError("config", "missing required setting: code");
    const std::string& code = config.get("code");
    if (!lm.space->contains(code)) throw CommandError("data", "unknown code: " + code);
    const std::size_t target = lm.space->index_of(code);

    Tape tape(false);
    const ForwardMode mode = ForwardMode::eval();
    const CodeContext ctx = lm.model->full_context(tape, mode);
    const ForwardTrace trace = lm.model->forward(tape, ctx, lm.model->token_ids(note.tokens), mode);
    const double direct = trace.direct.value()[target];
    const double final = trace.final.value()[target];

    const auto it = std::find(trace.selected.begin(), trace.selected.end(), target);
    if (!trace.has_relation() || it == trace.selected.end()) {
        throw CommandError("not-selected",
                           "code " + code + " is not among the top-" + std::to_string(lm.model->config().top_k) +
                               " codes of note " + note.id + "; gamma is forced to 0 and p = " + fmt(final, 6),
                           3);
    }
    const std::size_t row = static_cast<std::size_t>(it - trace.selected.begin());
    const Array& w = trace.graph_attention;
    std::vector<std::size_t> order(w.cols());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return w(row, x) > w(row, y); });
    if (order.size() > 3) order.resize(3);

    out << "note " << note.id << ", code " << code << "\n";
    out << "  direct p      " << fmt(direct, 6) << "\n";
    out << "  relation p    " << fmt(trace.relation.value()[row], 6) << "\n";
    if (trace.gate.valid()) out << "  gate          " << fmt(trace.gate.value()[row], 6) << "\n";
    out << "  final p       " << fmt(final, 6) << "\n";
    out << "top referenced major codes\n";
    for (std::size_t r = 0; r < order.size(); ++r) {
        const std::size_t major = trace.graph.uppers[order[r]];
        out << "  " << r + 1 << ". " << std::left << std::setw(10) << lm.space->majors().majors()[major]
            << fmt(w(row, order[r]), 6) << "\n";
    }
    return 0;
}

int cmd_grad_check(const RunConfig& config, std::ostream& out) {
    const double h = config.get_double("fd_step");
    const double tol = config.get_double("tolerance");
    const std::string check = config.get("check");
    GradCheckResult r;
    if (check == "linear") {
        r = check_linear(config.get_size("seed"), h);
        out << "linear layer\n";
    } else if (check == "pipeline") {
        PipelineCheckOptions o;
        o.seed = config.get_size("seed");
        o.h = h;
        o.coordinates = config.get_size("coordinates");
        const PipelineCheckResult p = check_micro_pipeline(o);
        r = p.check;
        out << "micro pipeline: " << p.warmup_steps << " warm-up steps, selection margin " << std::scientific
            << std::setprecision(2) << p.margin << std::defaultfloat << "\n";
    } else {
        throw CommandError("config", "check: expected pipeline or linear, got '" + check + "'");
    }
    out << "coordinates " << r.coordinates << "\n";
    out << "max relative error " << std::scientific << std::setprecision(3) << r.max_relative_error
        << std::defaultfloat << " at " << r.worst_parameter << "[" << r.worst_index << "]\n";
    const bool pass = r.max_relative_error <= tol;
    out << (pass ? "PASS" : "FAIL") << " (tolerance " << tol << ")\n";
    if (!pass) throw CommandError("gradcheck", "max relative error " + std::to_string(r.max_relative_error) +
                                                   " exceeds " + std::to_string(tol), 4);
    return 0;
}

}  // namespace

// ---------------------------------------------------------------- RunConfig

RunConfig::RunConfig() {
    for (const auto& s : key_specs()) values_[s.key] = s.fallback;
}

const std::vector<std::string>& RunConfig::keys() {
    static const std::vector<std::string> k = [] {
        std::vector<std::string> out;
        for (const auto& s : key_specs()) out.emplace_back(s.key);
        return out;
    }();
    return k;
}

bool RunConfig::known(const std::string& key) {
    const auto& k = keys();
    return std::find(k.begin(), k.end(), key) != k.end();
}

void RunConfig::merge_text(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    std::size_t ln = 0;
    while (std::getline(in, line)) {
        ++ln;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw CommandError("config", origin + " line " + std::to_string(ln) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        if (!known(key)) throw CommandError("config", origin + " line " + std::to_string(ln) + ": unknown key '" + key + "'");
        values_[key] = trim(line.substr(eq + 1));
    }
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (!known(key)) throw CommandError("config", "unknown key '" + key + "'");
    values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw CommandError("config", "unknown key '" + key + "'");
    return it->second;
}

std::size_t RunConfig::get_size(const std::string& key) const { return parse_size(key, get(key)); }
double RunConfig::get_double(const std::string& key) const { return parse_double(key, get(key)); }

bool RunConfig::get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw CommandError("config", key + ": expected true or false, got '" + v + "'");
}

std::vector<std::size_t> RunConfig::get_size_list(const std::string& key) const {
    std::vector<std::size_t> out;
    for (const auto& part : split(get(key), ',')) out.push_back(parse_size(key, part));
    return out;
}

ModelConfig RunConfig::model_config() const {
    ModelConfig m;
    m.embed_dim = get_size("embed_dim");
    m.hidden_dim = get_size("hidden_dim");
    m.bidirectional = get_bool("bidirectional");
    m.output_dim = get_size("output_dim");
    m.attention_dim = get_size("attention_dim");
    m.edge_dim = get_size("edge_dim");
    m.graph_layers = get_size("graph_layers");
    m.ffn_dim = get_size("ffn_dim");
    m.top_k = get_size("top_k");
    m.dropout = get_double("dropout");
    m.max_note_tokens = get_size("max_note_tokens");
    m.max_synonym_tokens = get_size("max_synonym_tokens");
    m.ablations.no_relation = get_bool("no_relation");
    m.ablations.no_context = get_bool("no_context");
    m.ablations.no_saa = get_bool("no_saa");
    try {
        m.validate();
    } catch (const std::invalid_argument& e) {
        throw CommandError("config", e.what());
    }
    return m;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig t;
    t.epochs = get_size("epochs");
    t.ks = get_size("ks");
    t.lambda = get_double("lambda");
    t.rdrop = get_double("rdrop");
    t.base_lr = get_double("base_lr");
    t.batch_size = get_size("batch_size");
    t.seed = get_size("seed");
    t.patience = get_size("patience");
    t.threads = get_size("threads");
    try {
        t.mode = parse_train_mode(get("mode"));
        t.validate();
    } catch (const std::invalid_argument& e) {
        throw CommandError("config", e.what());
    }
    return t;
}

SyntheticSpec RunConfig::synthetic_spec() const {
    SyntheticSpec s;
    s.num_codes = get_size("num_codes");
    s.num_majors = get_size("num_majors");
    s.majors_per_chapter = get_size("majors_per_chapter");
    s.keywords_per_code = get_size("keywords_per_code");
    s.synonyms_per_code = get_size("synonyms_per_code");
    s.codes_per_note = get_double("codes_per_note");
    s.silent_implied = get_bool("silent_implied");
    s.min_note_tokens = get_size("note_length_min");
    s.max_note_tokens = get_size("note_length_max");
    s.noise_vocab = get_size("noise_vocab");
    s.num_notes = get_size("num_notes");
    s.seed = get_size("seed");
    for (const auto& rule : split(get("implications"), ',')) {
        const auto gt = rule.find('>');
        if (gt == std::string::npos) throw CommandError("config", "implications: expected trigger>implied[:prob], got '" + rule + "'");
        ImplicationRule r;
        r.trigger = parse_size("implications", trim(rule.substr(0, gt)));
        std::string rest = rule.substr(gt + 1);
        if (const auto colon = rest.find(':'); colon != std::string::npos) {
            r.probability = parse_double("implications", trim(rest.substr(colon + 1)));
            rest = rest.substr(0, colon);
        }
        r.implied = parse_size("implications", trim(rest));
        s.implications.push_back(r);
    }
    for (const auto& rule : split(get("exclusions"), ',')) {
        const auto dash = rule.find('-');
        if (dash == std::string::npos) throw CommandError("config", "exclusions: expected a-b, got '" + rule + "'");
        s.exclusions.push_back({parse_size("exclusions", trim(rule.substr(0, dash))),
                                parse_size("exclusions", trim(rule.substr(dash + 1)))});
    }
    try {
        s.validate();
    } catch (const DataError& e) {
        throw CommandError("config", e.what());
    }
    return s;
}

CodeSpace::Options RunConfig::space_options() const {
    CodeSpace::Options o;
    o.synonyms_per_code = get_size("synonyms_per_code");
    o.max_synonym_tokens = get_size("max_synonym_tokens");
    o.distance_cap = get_size("distance_cap");
    return o;
}

std::string RunConfig::to_text() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
}

std::size_t edge_count(std::size_t majors, std::size_t k) { return majors * k; }

std::size_t edge_memory_proxy(std::size_t majors, std::size_t k, std::size_t edge_dim) {
    return majors * k * edge_dim;
}

// ---------------------------------------------------------------- entry point

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"ICD coding with contextualized code relations"};
    app.require_subcommand(1);
    std::string config_path;
    std::vector<std::string> sets;
    std::map<std::string, std::string> flags;

    struct Command {
        const char* name;
        const char* help;
        int (*fn)(const RunConfig&, std::ostream&);
    };
    const std::vector<Command> commands = {
        {"train", "train a model and write checkpoint, history and loss log", cmd_train},
        {"evaluate", "print metrics for a checkpoint or a predictions file on a split", cmd_evaluate},
        {"predict", "write per-note ranked codes with probabilities", cmd_predict},
        {"graph-stats", "report relation graph size and edge-type histogram", cmd_graph_stats},
        {"explain", "list the major codes a selected code attends to", cmd_explain},
        {"gen-data", "write a synthetic corpus, ontology and descriptions", cmd_gen_data},
        {"grad-check", "compare analytic and finite-difference gradients", cmd_grad_check},
    };
    std::vector<CLI::App*> subs;
    for (const auto& c : commands) {
        CLI::App* sub = app.add_subcommand(c.name, c.help);
        sub->add_option("--config", config_path, "key = value settings file");
        sub->add_option("--set", sets, "override one setting, key=value");
        for (const auto& s : key_specs()) {
            std::string help = s.help;
            if (*s.fallback) help += help.empty() ? std::string("default ") + s.fallback : std::string(" (default ") + s.fallback + ")";
            sub->add_option_function<std::string>(
                std::string("--") + s.key, [&flags, key = std::string(s.key)](const std::string& v) { flags[key] = v; },
                help);
        }
        subs.push_back(sub);
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    if (!reversed.empty()) reversed.pop_back();
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error[usage]: " << e.what() << "\n";
        return 2;
    }

    try {
        RunConfig config;
        if (!config_path.empty()) config.merge_text(read_file("config", config_path), config_path);
        for (const auto& [k, v] : flags) config.set(k, v);
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw CommandError("config", "--set expects key=value, got '" + s + "'");
            config.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
        }
        for (std::size_t i = 0; i < commands.size(); ++i)
            if (subs[i]->parsed()) return commands[i].fn(config, out);
        throw CommandError("usage", "no command given");
    } catch (const CommandError& e) {
        err << "error[" << e.category() << "]: " << e.what() << "\n";
        return e.exit_code();
    } catch (const TrainingError& e) {
        const std::string what = e.what();
        err << "error[" << (what.find("non-finite") != std::string::npos ? "numeric" : "training") << "]: " << what
            << "\n";
        return 1;
    } catch (const NumericError& e) {
        err << "error[numeric]: " << e.what() << "\n";
        return 1;
    } catch (const OntologyError& e) {
        err << "error[ontology]: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        err << "error[data]: " << e.what() << "\n";
        return 1;
    } catch (const MetricError& e) {
        err << "error[metrics]: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error[internal]: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace corelation::cli
