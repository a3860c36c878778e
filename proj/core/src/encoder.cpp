#include "corelation/encoder.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace corelation {

Vocabulary::Vocabulary() {
    add("<unk>");
    add("<pad>");
}

std::size_t Vocabulary::add(std::string_view token) {
    auto it = index_.find(std::string(token));
    if (it != index_.end()) return it->second;
    tokens_.emplace_back(token);
    index_.emplace(tokens_.back(), tokens_.size() - 1);
    return tokens_.size() - 1;
}

std::size_t Vocabulary::lookup(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
}

std::vector<std::size_t> Vocabulary::lookup(std::span<const std::string> tokens) const {
    std::vector<std::size_t> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(lookup(t));
    return ids;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
    if (tokens.size() < 2 || tokens[0] != "<unk>" || tokens[1] != "<pad>") {
        throw std::invalid_argument("vocabulary must start with <unk>, <pad>");
    }
    Vocabulary v;
    for (std::size_t i = 2; i < tokens.size(); ++i) {
        if (v.add(tokens[i]) != i) throw std::invalid_argument("duplicate vocabulary token: " + tokens[i]);
    }
    return v;
}

namespace {

Parameter* add_lstm_part(ParameterStore& store, const std::string& name, Array value) {
    return &store.add(name, std::move(value));
}

}  // namespace

TextEncoder::TextEncoder(const EncoderConfig& config, std::size_t vocab_size, ParameterStore& store, Rng& rng)
    : config_(config) {
    if (config.embed_dim == 0 || config.hidden_dim == 0 || config.output_dim == 0) {
        throw std::invalid_argument("encoder dimensions must be positive");
    }
    embedding_ = &store.add("encoder.embedding", uniform_array(vocab_size, config.embed_dim, 0.1, rng));
    const std::size_t h = config.hidden_dim;
    auto make = [&](const std::string& prefix) {
        Direction d;
        d.w_input = add_lstm_part(store, prefix + ".w_input", xavier_uniform(config.embed_dim, 4 * h, rng));
        d.w_hidden = add_lstm_part(store, prefix + ".w_hidden", xavier_uniform(h, 4 * h, rng));
        Array bias = Array::matrix(1, 4 * h);
        for (std::size_t j = h; j < 2 * h; ++j) bias[j] = 1.0;  // forget gate
        d.bias = add_lstm_part(store, prefix + ".bias", std::move(bias));
        return d;
    };
    forward_ = make("encoder.lstm_fwd");
    if (config.bidirectional) backward_ = make("encoder.lstm_bwd");
    const std::size_t width = config.bidirectional ? 2 * h : h;
    projection_ = Linear(width, config.output_dim, store, "encoder.projection", rng);
}

Var TextEncoder::encode_batch(Tape& tape, const std::vector<std::vector<std::size_t>>& sequences,
                              SequenceLayout& layout, const ForwardMode& mode) const {
    if (sequences.empty()) throw std::invalid_argument("encode_batch: no sequences");
    layout.lengths.clear();
    layout.steps = 0;
    for (const auto& s : sequences) {
        if (s.empty()) throw std::invalid_argument("encode_batch: empty token sequence");
        layout.lengths.push_back(s.size());
        layout.steps = std::max(layout.steps, s.size());
    }
    const std::size_t batch = sequences.size();
    std::vector<std::size_t> ids(layout.steps * batch, Vocabulary::kPad);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t t = 0; t < sequences[b].size(); ++t) ids[layout.row(t, b)] = sequences[b][t];

    Var emb = mode.apply_dropout(ad::gather_rows(tape.parameter(*embedding_), ids));
    Var states = ad::lstm(emb, tape.parameter(*forward_.w_input), tape.parameter(*forward_.w_hidden),
                          tape.parameter(*forward_.bias), layout, false);
    if (config_.bidirectional) {
        Var back = ad::lstm(emb, tape.parameter(*backward_.w_input), tape.parameter(*backward_.w_hidden),
                            tape.parameter(*backward_.bias), layout, true);
        states = ad::concat_cols(states, back);
    }
    return projection_(tape, states);
}

Var TextEncoder::encode_note(Tape& tape, std::span<const std::size_t> tokens, const ForwardMode& mode) const {
    if (tokens.empty()) throw std::invalid_argument("encode_note: empty note");
    const std::size_t d = std::min(tokens.size(), config_.max_note_tokens);
    std::vector<std::vector<std::size_t>> seq{std::vector<std::size_t>(tokens.begin(), tokens.begin() + d)};
    SequenceLayout layout;
    return encode_batch(tape, seq, layout, mode);
}

Var TextEncoder::encode_synonyms(Tape& tape, const std::vector<std::vector<std::size_t>>& sequences,
                                 const ForwardMode& mode) const {
    std::vector<std::vector<std::size_t>> clipped = sequences;
    for (auto& s : clipped) {
        if (s.empty()) throw std::invalid_argument("encode_synonyms: empty synonym");
        if (s.size() > config_.max_synonym_tokens) s.resize(config_.max_synonym_tokens);
    }
    SequenceLayout layout;
    Var states = encode_batch(tape, clipped, layout, mode);
    std::vector<std::vector<std::size_t>> groups(clipped.size());
    for (std::size_t b = 0; b < clipped.size(); ++b)
        for (std::size_t t = 0; t < layout.lengths[b]; ++t) groups[b].push_back(layout.row(t, b));
    return ad::group_mean(states, groups);
}

std::size_t TextEncoder::load_pretrained(const std::filesystem::path& path, const Vocabulary& vocab) const {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open embedding file: " + path.string());
    std::size_t found = 0, ln = 0;
    std::string line;
    Array& table = embedding_->value;
    while (std::getline(in, line)) {
        ++ln;
        std::istringstream fields(line);
        std::string token;
        if (!(fields >> token)) continue;
        std::vector<double> values;
        double v;
        while (fields >> v) values.push_back(v);
        if (values.size() != config_.embed_dim) {
            throw std::runtime_error("embedding file line " + std::to_string(ln) + ": expected " +
                                     std::to_string(config_.embed_dim) + " values, got " +
                                     std::to_string(values.size()));
        }
        const std::size_t idx = vocab.lookup(token);
        if (idx == Vocabulary::kUnk && token != "<unk>") continue;
        std::copy(values.begin(), values.end(), table.row(idx).begin());
        ++found;
    }
    return found;
}

}  // namespace corelation
