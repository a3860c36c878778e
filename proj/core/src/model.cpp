#include "corelation/model.hpp"

#include <algorithm>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

namespace corelation {

using nlohmann::json;

void ModelConfig::validate() const {
    auto positive = [](std::size_t v, const char* name) {
        if (v == 0) throw std::invalid_argument(std::string("model config: ") + name + " must be positive");
    };
    positive(embed_dim, "embed_dim");
    positive(hidden_dim, "hidden_dim");
    positive(output_dim, "output_dim");
    positive(attention_dim, "attention_dim");
    positive(edge_dim, "edge_dim");
    positive(graph_layers, "graph_layers");
    positive(ffn_dim, "ffn_dim");
    positive(top_k, "top_k");
    positive(max_note_tokens, "max_note_tokens");
    positive(max_synonym_tokens, "max_synonym_tokens");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("model config: dropout must be in [0, 1)");
}

std::string ModelConfig::to_json() const {
    nlohmann::ordered_json j;
    j["embed_dim"] = embed_dim;
    j["hidden_dim"] = hidden_dim;
    j["bidirectional"] = bidirectional;
    j["output_dim"] = output_dim;
    j["attention_dim"] = attention_dim;
    j["edge_dim"] = edge_dim;
    j["graph_layers"] = graph_layers;
    j["ffn_dim"] = ffn_dim;
    j["top_k"] = top_k;
    j["dropout"] = dropout;
    j["max_note_tokens"] = max_note_tokens;
    j["max_synonym_tokens"] = max_synonym_tokens;
    j["no_relation"] = ablations.no_relation;
    j["no_context"] = ablations.no_context;
    j["no_saa"] = ablations.no_saa;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    const json j = json::parse(text);
    ModelConfig c;
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.bidirectional = j.at("bidirectional").get<bool>();
    c.output_dim = j.at("output_dim").get<std::size_t>();
    c.attention_dim = j.at("attention_dim").get<std::size_t>();
    c.edge_dim = j.at("edge_dim").get<std::size_t>();
    c.graph_layers = j.at("graph_layers").get<std::size_t>();
    c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
    c.top_k = j.at("top_k").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.max_note_tokens = j.at("max_note_tokens").get<std::size_t>();
    c.max_synonym_tokens = j.at("max_synonym_tokens").get<std::size_t>();
    c.ablations.no_relation = j.at("no_relation").get<bool>();
    c.ablations.no_context = j.at("no_context").get<bool>();
    c.ablations.no_saa = j.at("no_saa").get<bool>();
    c.validate();
    return c;
}

CodeContext CodeContext::copy_to(Tape& tape) const {
    CodeContext c;
    c.codes = codes;
    auto copy = [&](const Var& v) { return v.valid() ? tape.constant(v.value()) : Var(); };
    c.synonyms = copy(synonyms);
    c.synonym_max = copy(synonym_max);
    c.alpha = copy(alpha);
    c.beta = copy(beta);
    c.major_synonyms = copy(major_synonyms);
    c.major_synonym_max = copy(major_synonym_max);
    return c;
}

namespace {

EncoderConfig encoder_config(const ModelConfig& c) {
    EncoderConfig e;
    e.embed_dim = c.embed_dim;
    e.hidden_dim = c.hidden_dim;
    e.bidirectional = c.bidirectional;
    e.output_dim = c.output_dim;
    e.max_note_tokens = c.max_note_tokens;
    e.max_synonym_tokens = c.max_synonym_tokens;
    return e;
}

GraphTransformerConfig graph_config(const ModelConfig& c, const CodeSpace& space) {
    GraphTransformerConfig g;
    g.width = c.output_dim;
    g.edge_dim = c.edge_dim;
    g.ffn_dim = c.ffn_dim;
    g.layers = c.graph_layers;
    g.bucket_count = space.edge_types().bucket_count();
    return g;
}

}  // namespace

CoRelationModel::CoRelationModel(const ModelConfig& config, const CodeSpace& space, Vocabulary vocab,
                                 std::uint64_t seed)
    : config_(config), space_(&space), vocab_(std::move(vocab)), synonyms_per_code_(space.synonyms_per_code()) {
    config_.validate();
    if (space.size() == 0) throw std::invalid_argument("model: empty code space");
    Rng rng = Rng::stream(seed, "init");
    encoder_ = TextEncoder(encoder_config(config_), vocab_.size(), store_, rng);
    attention_ = CodeAttention(config_.output_dim, config_.attention_dim, store_, rng);
    heads_ = PredictionHeads(config_.output_dim, store_, rng);
    graph_ = GraphTransformer(graph_config(config_, space), store_, rng);
    gate_ = GateHead(config_.output_dim, store_, rng);

    for (std::size_t i = 0; i < space.size(); ++i)
        for (const auto& syn : space.synonyms(i)) synonym_ids_.push_back(vocab_.lookup(syn));
    for (std::size_t a = 0; a < space.majors().count(); ++a)
        for (const auto& syn : space.major_synonyms(a)) major_synonym_ids_.push_back(vocab_.lookup(syn));
}

Var CoRelationModel::encode_code_synonyms(Tape& tape, const std::vector<std::vector<std::size_t>>& ids,
                                          std::span<const std::size_t> rows, const ForwardMode& mode) const {
    std::vector<std::vector<std::size_t>> batch;
    batch.reserve(rows.size() * synonyms_per_code_);
    for (std::size_t r : rows)
        for (std::size_t j = 0; j < synonyms_per_code_; ++j) batch.push_back(ids[r * synonyms_per_code_ + j]);
    return encoder_.encode_synonyms(tape, batch, mode);
}

CodeContext CoRelationModel::code_context(Tape& tape, std::span<const std::size_t> codes, const ForwardMode& mode,
                                          bool direct_only) const {
    if (codes.empty()) throw std::invalid_argument("code_context: no codes");
    for (std::size_t i = 0; i < codes.size(); ++i) {
        if (codes[i] >= space_->size()) throw std::out_of_range("code_context: code index out of range");
        if (i > 0 && codes[i] <= codes[i - 1]) throw std::invalid_argument("code_context: codes must be ascending");
    }
    CodeContext ctx;
    ctx.codes.assign(codes.begin(), codes.end());
    ctx.synonyms = encode_code_synonyms(tape, synonym_ids_, codes, mode);
    ctx.synonym_max = pool_code(ctx.synonyms, synonyms_per_code_);
    Var mean = average_synonyms(ctx.synonyms, synonyms_per_code_);
    ctx.alpha = heads_.alpha(tape, mean);
    const bool relation = !direct_only && !config_.ablations.no_relation;
    if (relation) {
        ctx.beta = heads_.beta(tape, mean);
        std::vector<std::size_t> majors(space_->majors().count());
        std::iota(majors.begin(), majors.end(), 0);
        ctx.major_synonyms = encode_code_synonyms(tape, major_synonym_ids_, majors, mode);
        ctx.major_synonym_max = pool_code(ctx.major_synonyms, synonyms_per_code_);
    }
    if (tape.recording()) gradient_evaluations_ += codes.size();
    return ctx;
}

CodeContext CoRelationModel::full_context(Tape& tape, const ForwardMode& mode, bool direct_only) const {
    std::vector<std::size_t> all(space_->size());
    std::iota(all.begin(), all.end(), 0);
    return code_context(tape, all, mode, direct_only);
}

ForwardTrace CoRelationModel::forward(Tape& tape, const CodeContext& ctx, std::span<const std::size_t> tokens,
                                      const ForwardMode& mode, const ForwardOptions& options) const {
    ForwardTrace trace;
    trace.codes = ctx.codes;
    Var states = encoder_.encode_note(tape, tokens, mode);
    NoteProjection note = attention_.project_note(tape, states);
    Var rows = attention_.contextualize(tape, ctx.synonyms, note, mode);
    trace.contextual = pool_code(rows, synonyms_per_code_);
    trace.direct = direct_probability(ctx.alpha, trace.contextual);
    trace.final = trace.direct;
    if (options.direct_only || config_.ablations.no_relation) return trace;
    if (!ctx.has_majors()) throw std::invalid_argument("forward: context was built without major codes");

    const Array& direct = trace.direct.value();
    SelectionResult sel = select_top_k(direct.data(), config_.top_k);
    // Graph rows in code order, so dropout masks do not follow score ranks.
    std::sort(sel.selected.begin(), sel.selected.end());
    trace.selected = sel.selected;
    std::vector<std::size_t> lower_codes;
    lower_codes.reserve(sel.selected.size());
    for (std::size_t pos : sel.selected) lower_codes.push_back(ctx.codes[pos]);
    trace.graph = build_relation_graph(lower_codes, *space_);

    Var lowers, uppers;
    if (config_.ablations.no_context) {
        lowers = ad::gather_rows(ctx.synonym_max, sel.selected);
        uppers = ctx.major_synonym_max;
    } else {
        lowers = ad::gather_rows(trace.contextual, sel.selected);
        uppers = pool_code(attention_.contextualize(tape, ctx.major_synonyms, note, mode), synonyms_per_code_);
    }
    Var enhanced = graph_.forward(tape, trace.graph, lowers, uppers, mode, &trace.graph_attention);
    trace.relation = relation_probability(ad::gather_rows(ctx.beta, sel.selected), enhanced);

    if (config_.ablations.no_saa) {
        trace.final = ad::scatter_rows(trace.direct, sel.selected, trace.relation);
        return trace;
    }
    if (options.forced_gate) {
        trace.gate = tape.constant(Array::matrix(sel.selected.size(), 1, *options.forced_gate));
    } else {
        trace.gate = gate_(tape, ad::gather_rows(ctx.alpha, sel.selected),
                           ad::gather_rows(trace.contextual, sel.selected));
    }
    trace.final = aggregate(trace.direct, trace.relation, trace.gate, sel.selected);
    return trace;
}

std::vector<std::vector<double>> CoRelationModel::predict(std::span<const NoteRecord> notes, std::size_t threads,
                                                          const ForwardOptions& options) const {
    std::vector<std::vector<double>> out(notes.size());
    if (notes.empty()) return out;
    Tape shared(false);
    const ForwardMode mode = ForwardMode::eval();
    const CodeContext ctx = full_context(shared, mode, options.direct_only);

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= notes.size()) return;
            try {
                Tape tape(false);
                CodeContext local = ctx.copy_to(tape);
                const auto ids = vocab_.lookup(notes[i].tokens);
                ForwardTrace trace = forward(tape, local, ids, mode, options);
                const auto values = trace.final.value().data();
                out[i].assign(values.begin(), values.end());
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = notes.size();
            }
        }
    };
    threads = std::clamp<std::size_t>(threads, 1, notes.size());
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

void CoRelationModel::save(const std::filesystem::path& path, const std::string& extra_json) const {
    nlohmann::ordered_json manifest;
    manifest["format"] = "corelation";
    manifest["model_config"] = json::parse(config_.to_json());
    manifest["synonyms_per_code"] = synonyms_per_code_;
    manifest["codes"] = space_->codes();
    manifest["vocabulary"] = vocab_.tokens();
    manifest["extra"] = json::parse(extra_json);
    write_checkpoint(path, manifest.dump(), store_);
}

std::unique_ptr<CoRelationModel> CoRelationModel::load(const std::filesystem::path& path, const CodeSpace& space,
                                                       std::string* extra_json) {
    Checkpoint ckpt = read_checkpoint(path);
    json manifest;
    try {
        manifest = json::parse(ckpt.manifest_json);
    } catch (const json::exception& e) {
        throw std::runtime_error("checkpoint manifest is not valid JSON: " + std::string(e.what()));
    }
    if (manifest.value("format", "") != "corelation") throw std::runtime_error("not a corelation checkpoint");
    const auto codes = manifest.at("codes").get<std::vector<std::string>>();
    if (codes != space.codes()) throw std::runtime_error("checkpoint code list does not match the code space");
    if (manifest.at("synonyms_per_code").get<std::size_t>() != space.synonyms_per_code()) {
        throw std::runtime_error("checkpoint synonyms_per_code does not match the code space");
    }
    const ModelConfig config = ModelConfig::from_json(manifest.at("model_config").dump());
    Vocabulary vocab = Vocabulary::from_tokens(manifest.at("vocabulary").get<std::vector<std::string>>());
    auto model = std::make_unique<CoRelationModel>(config, space, std::move(vocab), 0);
    model->store_.restore(ckpt.tensors);
    if (extra_json) *extra_json = manifest.at("extra").dump();
    return model;
}

Vocabulary build_vocabulary(const CodeSpace& space, std::span<const NoteRecord> notes) {
    Vocabulary vocab;
    for (std::size_t i = 0; i < space.size(); ++i)
        for (const auto& syn : space.synonyms(i))
            for (const auto& t : syn) vocab.add(t);
    for (std::size_t a = 0; a < space.majors().count(); ++a)
        for (const auto& syn : space.major_synonyms(a))
            for (const auto& t : syn) vocab.add(t);
    for (const auto& note : notes)
        for (const auto& t : note.tokens) vocab.add(t);
    return vocab;
}

}  // namespace corelation
