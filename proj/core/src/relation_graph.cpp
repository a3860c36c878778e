#include "corelation/relation_graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace corelation {

SelectionResult select_top_k(std::span<const double> scores, std::size_t k) {
    if (k == 0) throw std::invalid_argument("select_top_k: k must be at least 1");
    const std::size_t n = scores.size();
    k = std::min(k, n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto before = [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), before);
    order.resize(k);
    SelectionResult result;
    result.mask.assign(n, false);
    for (std::size_t i : order) result.mask[i] = true;
    result.selected = std::move(order);
    return result;
}

std::vector<std::size_t> RelationGraph::histogram() const {
    std::vector<std::size_t> counts(bucket_count, 0);
    for (std::size_t t : edge_types) ++counts.at(t);
    return counts;
}

RelationGraph build_relation_graph(std::span<const std::size_t> lowers, std::span<const CodeId> codes,
                                   const MajorCodeIndex& majors, const Ontology& ontology,
                                   const EdgeTypeTable& table) {
    RelationGraph g;
    g.uppers.resize(majors.count());
    std::iota(g.uppers.begin(), g.uppers.end(), 0);
    g.lowers.assign(lowers.begin(), lowers.end());
    g.bucket_count = table.bucket_count();
    g.edge_types.reserve(majors.count() * lowers.size());
    for (std::size_t a = 0; a < majors.count(); ++a) {
        for (std::size_t k : lowers) {
            if (k >= codes.size()) throw std::out_of_range("build_relation_graph: code index out of range");
            g.edge_types.push_back(edge_type(majors.majors()[a], codes[k], ontology, table));
        }
    }
    return g;
}

RelationGraph build_relation_graph(std::span<const std::size_t> lowers, const CodeSpace& space) {
    RelationGraph g;
    const std::size_t a_count = space.majors().count();
    g.uppers.resize(a_count);
    std::iota(g.uppers.begin(), g.uppers.end(), 0);
    g.lowers.assign(lowers.begin(), lowers.end());
    g.bucket_count = space.edge_types().bucket_count();
    g.edge_types.reserve(a_count * lowers.size());
    for (std::size_t a = 0; a < a_count; ++a) {
        for (std::size_t k : lowers) {
            if (k >= space.size()) throw std::out_of_range("build_relation_graph: code index out of range");
            g.edge_types.push_back(space.edge_bucket(a, k));
        }
    }
    return g;
}

namespace {

Parameter* add_vector(ParameterStore& store, const std::string& name, std::size_t width, double fill) {
    return &store.add(name, Array::matrix(1, width, fill));
}

}  // namespace

GraphTransformer::GraphTransformer(const GraphTransformerConfig& config, ParameterStore& store, Rng& rng)
    : config_(config) {
    if (config.layers == 0) throw std::invalid_argument("graph transformer needs at least one layer");
    const std::size_t e = config.width;
    edge_table_ = &store.add("graph.edge_embedding", uniform_array(config.bucket_count, config.edge_dim, 0.1, rng));
    for (std::size_t l = 0; l < config.layers; ++l) {
        const std::string p = "graph.layer" + std::to_string(l);
        Layer layer;
        layer.query = Linear(e, e, store, p + ".query", rng);
        layer.key = Linear(e, e, store, p + ".key", rng);
        layer.value = Linear(e, e, store, p + ".value", rng);
        layer.edge = Linear(config.edge_dim, e, store, p + ".edge", rng);
        layer.output = Linear(e, e, store, p + ".output", rng);
        layer.ffn_in = Linear(e, config.ffn_dim, store, p + ".ffn_in", rng);
        layer.ffn_out = Linear(config.ffn_dim, e, store, p + ".ffn_out", rng);
        layer.norm1_gain = add_vector(store, p + ".norm1.gain", e, 1.0);
        layer.norm1_bias = add_vector(store, p + ".norm1.bias", e, 0.0);
        layer.norm2_gain = add_vector(store, p + ".norm2.gain", e, 1.0);
        layer.norm2_bias = add_vector(store, p + ".norm2.bias", e, 0.0);
        layers_.push_back(layer);
    }
}

Var GraphTransformer::forward(Tape& tape, const RelationGraph& graph, Var lowers, Var uppers,
                              const ForwardMode& mode, Array* attention) const {
    const std::size_t k_count = graph.lower_count(), a_count = graph.upper_count();
    if (lowers.rows() != k_count || uppers.rows() != a_count || lowers.cols() != config_.width ||
        uppers.cols() != config_.width) {
        throw NumericError("graph transformer: embedding shapes " + lowers.value().shape_string() + ", " +
                           uppers.value().shape_string() + " do not match graph " + std::to_string(k_count) +
                           " lowers x " + std::to_string(a_count) + " uppers");
    }
    // One K x A mask per bucket that actually occurs.
    std::vector<Array> masks(graph.bucket_count);
    std::vector<bool> present(graph.bucket_count, false);
    for (std::size_t a = 0; a < a_count; ++a) {
        for (std::size_t k = 0; k < k_count; ++k) {
            const std::size_t b = graph.edge_type(a, k);
            if (b >= config_.bucket_count) throw NumericError("graph transformer: edge bucket out of range");
            if (!present[b]) {
                masks[b] = Array::matrix(k_count, a_count);
                present[b] = true;
            }
            masks[b](k, a) = 1.0;
        }
    }
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(config_.width));
    Var table = tape.parameter(*edge_table_);
    Var v = lowers;
    for (const Layer& layer : layers_) {
        Var q = layer.query(tape, v);
        Var keys = layer.key(tape, uppers);
        Var values = layer.value(tape, uppers);
        Var edges = layer.edge(tape, table);  // buckets x e
        Var scores;
        for (std::size_t b = 0; b < graph.bucket_count; ++b) {
            if (!present[b]) continue;
            const std::size_t row[] = {b};
            Var modulated = ad::mul(q, ad::gather_rows(edges, row));
            Var part = ad::mul(ad::matmul_nt(modulated, keys), tape.constant(masks[b]));
            scores = scores.valid() ? ad::add(scores, part) : part;
        }
        Var attn = ad::softmax_rows(ad::scale(scores, inv_sqrt));
        if (attention) *attention = attn.value();
        Var message = mode.apply_dropout(layer.output(tape, ad::matmul(attn, values)));
        Var h = ad::layer_norm_rows(ad::add(v, message));
        h = ad::add(ad::mul(h, tape.parameter(*layer.norm1_gain)), tape.parameter(*layer.norm1_bias));
        Var ffn = layer.ffn_out(tape, ad::gelu(layer.ffn_in(tape, h)));
        Var out = ad::layer_norm_rows(ad::add(h, mode.apply_dropout(ffn)));
        v = ad::add(ad::mul(out, tape.parameter(*layer.norm2_gain)), tape.parameter(*layer.norm2_bias));
    }
    return v;
}

Var relation_probability(Var beta, Var enhanced) {
    return ad::sigmoid(ad::row_sum(ad::mul(beta, enhanced)));
}

}  // namespace corelation
