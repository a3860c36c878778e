#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "corelation/code_attention.hpp"
#include "corelation/data.hpp"
#include "corelation/encoder.hpp"
#include "corelation/gating_loss.hpp"
#include "corelation/parameters.hpp"
#include "corelation/relation_graph.hpp"

namespace corelation {

struct Ablations {
    bool no_relation = false;  ///< output the direct probabilities
    bool no_context = false;   ///< graph nodes start from pooled synonym embeddings
    bool no_saa = false;       ///< selected codes output the relation probabilities

    friend bool operator==(const Ablations&, const Ablations&) = default;
};

struct ModelConfig {
    std::size_t embed_dim = 100;
    std::size_t hidden_dim = 512;
    bool bidirectional = true;
    std::size_t output_dim = 512;  ///< e
    std::size_t attention_dim = 256;
    std::size_t edge_dim = 64;
    std::size_t graph_layers = 1;
    std::size_t ffn_dim = 1024;
    std::size_t top_k = 50;
    double dropout = 0.1;
    std::size_t max_note_tokens = 4000;
    std::size_t max_synonym_tokens = 32;
    Ablations ablations;

    void validate() const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ForwardOptions {
    /// Stop after the direct probabilities (selective-training estimation pass).
    bool direct_only = false;
    /// Replace every selected gate value by this constant.
    std::optional<double> forced_gate;
};

/// Note-independent quantities of an evaluated code subset, computed once per
/// tape and shared by every note forwarded on it.
struct CodeContext {
    std::vector<std::size_t> codes;  ///< ascending target indices
    Var synonyms;                    ///< (n * M) x e
    Var synonym_max;                 ///< n x e, max over each code's synonyms
    Var alpha;                       ///< n x e
    Var beta;                        ///< n x e
    Var major_synonyms;              ///< (A * M) x e, absent for direct-only contexts
    Var major_synonym_max;           ///< A x e

    std::size_t size() const { return codes.size(); }
    bool has_majors() const { return major_synonyms.valid(); }
    /// Same values as constants on another tape.
    CodeContext copy_to(Tape& tape) const;
};

struct ForwardTrace {
    std::vector<std::size_t> codes;  ///< evaluated target indices, row order of the vectors below
    Var contextual;                  ///< n x e pooled contextual embeddings c
    Var direct;                      ///< n x 1
    /// Positions into `codes` of the graph's lower nodes (the top-K by direct
    /// probability), ascending; empty without the relation path.
    std::vector<std::size_t> selected;
    RelationGraph graph;
    Var relation;  ///< K x 1
    Var gate;      ///< K x 1, absent when the gate is bypassed
    Var final;     ///< n x 1
    Array graph_attention;  ///< K x A

    bool has_relation() const { return relation.valid(); }
};

/// Encoder, code attention, relation graph and gate over a fixed code space.
/// The code space must outlive the model.
class CoRelationModel {
public:
    CoRelationModel(const ModelConfig& config, const CodeSpace& space, Vocabulary vocab, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    ModelConfig& mutable_config() { return config_; }
    const CodeSpace& code_space() const { return *space_; }
    const Vocabulary& vocabulary() const { return vocab_; }
    ParameterStore& parameters() { return store_; }
    const ParameterStore& parameters() const { return store_; }
    const TextEncoder& encoder() const { return encoder_; }
    const GraphTransformer& graph_transformer() const { return graph_; }

    std::vector<std::size_t> token_ids(std::span<const std::string> tokens) const { return vocab_.lookup(tokens); }

    /// Context over `codes` (ascending, unique). Majors are encoded unless `direct_only`.
    CodeContext code_context(Tape& tape, std::span<const std::size_t> codes, const ForwardMode& mode,
                             bool direct_only = false) const;
    CodeContext full_context(Tape& tape, const ForwardMode& mode, bool direct_only = false) const;

    ForwardTrace forward(Tape& tape, const CodeContext& context, std::span<const std::size_t> tokens,
                         const ForwardMode& mode, const ForwardOptions& options = {}) const;

    /// Final probabilities over all N codes for every note, evaluated in
    /// parallel on read-only parameters. Results are in note order.
    std::vector<std::vector<double>> predict(std::span<const NoteRecord> notes, std::size_t threads = 1,
                                             const ForwardOptions& options = {}) const;

    /// Number of code evaluations recorded on gradient tapes (one per code per context).
    std::uint64_t gradient_code_evaluations() const { return gradient_evaluations_.load(); }
    void reset_counters() { gradient_evaluations_ = 0; }

    /// Writes parameters plus a manifest with config, vocabulary, codes and `extra` (a JSON object text).
    void save(const std::filesystem::path& path, const std::string& extra_json = "{}") const;
    /// Loads a checkpoint written by save(); the code list must match `space`.
    static std::unique_ptr<CoRelationModel> load(const std::filesystem::path& path, const CodeSpace& space,
                                                 std::string* extra_json = nullptr);

private:
    Var encode_code_synonyms(Tape& tape, const std::vector<std::vector<std::size_t>>& ids,
                             std::span<const std::size_t> rows, const ForwardMode& mode) const;

    ModelConfig config_;
    const CodeSpace* space_;
    Vocabulary vocab_;
    std::size_t synonyms_per_code_;
    ParameterStore store_;
    TextEncoder encoder_;
    CodeAttention attention_;
    PredictionHeads heads_;
    GraphTransformer graph_;
    GateHead gate_;
    std::vector<std::vector<std::size_t>> synonym_ids_;        ///< N * M sequences
    std::vector<std::vector<std::size_t>> major_synonym_ids_;  ///< A * M sequences
    mutable std::atomic<std::uint64_t> gradient_evaluations_{0};
};

/// Vocabulary over code and major synonyms followed by note tokens, in first-seen order.
Vocabulary build_vocabulary(const CodeSpace& space, std::span<const NoteRecord> notes);

}  // namespace corelation
