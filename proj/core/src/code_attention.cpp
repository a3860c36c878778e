#include "corelation/code_attention.hpp"

#include <cmath>

namespace corelation {

CodeAttention::CodeAttention(std::size_t embed_width, std::size_t attention_dim, ParameterStore& store, Rng& rng)
    : attention_dim_(attention_dim),
      query_(embed_width, attention_dim, store, "attention.query", rng),
      key_(embed_width, attention_dim, store, "attention.key", rng),
      value_(embed_width, attention_dim, store, "attention.value", rng),
      output_(attention_dim, embed_width, store, "attention.output", rng) {}

NoteProjection CodeAttention::project_note(Tape& tape, Var note_states) const {
    return {key_(tape, note_states), value_(tape, note_states)};
}

Var CodeAttention::contextualize(Tape& tape, Var synonyms, const NoteProjection& note, const ForwardMode& mode,
                                 Array* weights) const {
    Var q = query_(tape, synonyms);
    Var scores = ad::scale(ad::matmul_nt(q, note.keys), 1.0 / std::sqrt(static_cast<double>(attention_dim_)));
    Var attn = ad::softmax_rows(scores);
    if (weights) *weights = attn.value();
    Var mixed = ad::matmul(attn, note.values);
    return mode.apply_dropout(output_(tape, mixed));
}

std::vector<std::vector<std::size_t>> synonym_groups(std::size_t count, std::size_t per_code) {
    std::vector<std::vector<std::size_t>> groups(count);
    for (std::size_t i = 0; i < count; ++i)
        for (std::size_t j = 0; j < per_code; ++j) groups[i].push_back(i * per_code + j);
    return groups;
}

Var pool_code(Var rows, std::size_t per_code) {
    if (per_code == 0 || rows.rows() % per_code != 0) throw NumericError("pool_code: bad synonym count");
    return ad::group_max(rows, synonym_groups(rows.rows() / per_code, per_code));
}

Var average_synonyms(Var rows, std::size_t per_code) {
    if (per_code == 0 || rows.rows() % per_code != 0) throw NumericError("average_synonyms: bad synonym count");
    return ad::group_mean(rows, synonym_groups(rows.rows() / per_code, per_code));
}

PredictionHeads::PredictionHeads(std::size_t width, ParameterStore& store, Rng& rng)
    : alpha_(width, width, store, "heads.alpha", rng), beta_(width, width, store, "heads.beta", rng) {}

Var direct_probability(Var weights, Var embeddings) {
    return ad::sigmoid(ad::row_sum(ad::mul(weights, embeddings)));
}

}  // namespace corelation
