#pragma once

#include <cstddef>
#include <vector>

#include "corelation/autodiff.hpp"
#include "corelation/layers.hpp"
#include "corelation/parameters.hpp"

namespace corelation {

/// Keys and values of one note, projected once and shared by every query.
struct NoteProjection {
    Var keys;    ///< D x a
    Var values;  ///< D x a
};

/// Single-head scaled dot-product attention of synonym embeddings over note states.
class CodeAttention {
public:
    CodeAttention() = default;
    CodeAttention(std::size_t embed_width, std::size_t attention_dim, ParameterStore& store, Rng& rng);

    std::size_t attention_dim() const { return attention_dim_; }

    NoteProjection project_note(Tape& tape, Var note_states) const;

    /// One contextual row per synonym row (R x e). When `weights` is non-null
    /// it receives the R x D attention matrix.
    Var contextualize(Tape& tape, Var synonyms, const NoteProjection& note, const ForwardMode& mode,
                      Array* weights = nullptr) const;

private:
    std::size_t attention_dim_ = 0;
    Linear query_;
    Linear key_;
    Linear value_;
    Linear output_;
};

/// Row groups [i*M, (i+1)*M) for `count` codes with M synonyms each.
std::vector<std::vector<std::size_t>> synonym_groups(std::size_t count, std::size_t per_code);

/// Columnwise max over each code's synonym rows.
Var pool_code(Var rows, std::size_t per_code);

/// FC_alpha and FC_beta over the average of a code's synonym embeddings.
class PredictionHeads {
public:
    PredictionHeads() = default;
    PredictionHeads(std::size_t width, ParameterStore& store, Rng& rng);

    Var alpha(Tape& tape, Var pooled_synonyms) const { return alpha_(tape, pooled_synonyms); }
    Var beta(Tape& tape, Var pooled_synonyms) const { return beta_(tape, pooled_synonyms); }

private:
    Linear alpha_;
    Linear beta_;
};

/// Mean of each code's synonym rows.
Var average_synonyms(Var rows, std::size_t per_code);

/// sigmoid(rowwise dot(weights, embeddings)), n x 1.
Var direct_probability(Var weights, Var embeddings);

}  // namespace corelation
