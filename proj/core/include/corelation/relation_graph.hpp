#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "corelation/autodiff.hpp"
#include "corelation/data.hpp"
#include "corelation/layers.hpp"
#include "corelation/ontology.hpp"
#include "corelation/parameters.hpp"

namespace corelation {

struct SelectionResult {
    /// Positions into the scored vector, by descending score then ascending position.
    std::vector<std::size_t> selected;
    std::vector<bool> mask;
};

/// Top-k positions of `scores`; k is clamped to the number of scores.
SelectionResult select_top_k(std::span<const double> scores, std::size_t k);

/// Complete bipartite graph between every major (upper) and the selected codes (lower).
struct RelationGraph {
    std::vector<std::size_t> uppers;      ///< major indices, 0..A-1
    std::vector<std::size_t> lowers;      ///< target code indices
    std::vector<std::size_t> edge_types;  ///< A x K row-major bucket ids
    std::size_t bucket_count = 0;

    std::size_t upper_count() const { return uppers.size(); }
    std::size_t lower_count() const { return lowers.size(); }
    std::size_t edge_count() const { return edge_types.size(); }
    std::size_t edge_type(std::size_t a, std::size_t k) const { return edge_types[a * lowers.size() + k]; }
    /// Number of edges in each bucket.
    std::vector<std::size_t> histogram() const;
};

/// Edge types from ontology hop distances. `codes` maps target indices to ids.
RelationGraph build_relation_graph(std::span<const std::size_t> lowers, std::span<const CodeId> codes,
                                   const MajorCodeIndex& majors, const Ontology& ontology,
                                   const EdgeTypeTable& table);
/// Same graph using the code space's precomputed buckets.
RelationGraph build_relation_graph(std::span<const std::size_t> lowers, const CodeSpace& space);

struct GraphTransformerConfig {
    std::size_t width = 512;      ///< e
    std::size_t edge_dim = 64;    ///< e_r
    std::size_t ffn_dim = 1024;
    std::size_t layers = 1;
    std::size_t bucket_count = 8;
};

/// Edge-aware attention from lower nodes to upper nodes: the edge embedding
/// modulates the key elementwise, then residual + layer norm and a GELU
/// feed-forward block. Upper nodes are not updated.
class GraphTransformer {
public:
    GraphTransformer() = default;
    GraphTransformer(const GraphTransformerConfig& config, ParameterStore& store, Rng& rng);

    const GraphTransformerConfig& config() const { return config_; }

    /// Updated lower embeddings, K x e. `attention` receives the last layer's K x A weights.
    Var forward(Tape& tape, const RelationGraph& graph, Var lowers, Var uppers, const ForwardMode& mode,
                Array* attention = nullptr) const;

    Parameter& edge_embeddings() const { return *edge_table_; }

private:
    struct Layer {
        Linear query, key, value, edge, output, ffn_in, ffn_out;
        Parameter* norm1_gain = nullptr;
        Parameter* norm1_bias = nullptr;
        Parameter* norm2_gain = nullptr;
        Parameter* norm2_bias = nullptr;
    };

    GraphTransformerConfig config_;
    Parameter* edge_table_ = nullptr;
    std::vector<Layer> layers_;
};

/// sigmoid(rowwise dot(beta, enhanced)), K x 1.
Var relation_probability(Var beta, Var enhanced);

}  // namespace corelation
