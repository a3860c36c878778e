#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "corelation/array.hpp"
#include "corelation/rng.hpp"

namespace corelation {

/// A named learnable array and its accumulated gradient.
struct Parameter {
    std::string name;
    Array value;
    Array grad;

    void zero_grad();
};

class Tape;

/// Handle to one node on a Tape. Cheap to copy; only valid while its tape lives.
class Var {
public:
    Var() = default;

    const Array& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    Tape& tape() const { return *tape_; }
    std::size_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Reverse-mode recording of array operations.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order; backward() walks it once in reverse. A tape built with
/// `record = false` still evaluates every op but keeps no closures, which is
/// how the gradient-free estimation and evaluation passes run.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Array& out_grad)>;

    explicit Tape(bool record = true) : record_(record) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const { return record_; }

    Var constant(Array value);
    /// Leaf bound to `param`, read in place (the value must not change while
    /// the tape is alive). Repeated calls on one tape return the same node.
    Var parameter(Parameter& param);

    /// Appends an op result. `fn` is dropped unless some input requires a gradient.
    Var record(Array value, std::span<const Var> inputs, BackwardFn fn, const char* op);
    Var record(Array value, std::initializer_list<Var> inputs, BackwardFn fn, const char* op) {
        return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn), op);
    }
    /// Id the next recorded node will receive.
    std::size_t next_id() const { return nodes_.size(); }

    const Array& value(std::size_t id) const {
        const Node& n = nodes_[id];
        return n.param ? n.param->value : n.value;
    }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

    /// Gradient buffer of node `id`, zero-initialized on first access.
    Array& grad(std::size_t id);

    /// Runs reverse accumulation from a scalar loss and adds the result into
    /// every reached Parameter::grad.
    void backward(Var loss);

    /// Gradient of `v` after backward(); nullptr when nothing flowed into it.
    const Array* gradient(Var v) const;

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Array value;
        Array grad;
        bool requires_grad = false;
        bool has_grad = false;
        BackwardFn backward;
        Parameter* param = nullptr;
    };

    bool record_;
    std::deque<Node> nodes_;
    std::vector<std::pair<Parameter*, std::size_t>> param_nodes_;
};

/// Time-major layout of a padded batch of sequences: row t*batch + b holds
/// position t of sequence b; positions t >= lengths[b] are padding.
struct SequenceLayout {
    std::size_t steps = 0;
    std::vector<std::size_t> lengths;

    std::size_t batch() const { return lengths.size(); }
    std::size_t row(std::size_t t, std::size_t b) const { return t * lengths.size() + b; }
    bool valid(std::size_t t, std::size_t b) const { return t < lengths[b]; }
};

namespace ad {

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var transpose(Var a);
/// Same shape, or `b` a single row broadcast over the rows of `a`.
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product; same broadcast rule as add().
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// factor * a + shift
Var affine(Var a, double factor, double shift);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
/// x * Phi(x) with the exact normal CDF.
Var gelu(Var a);
Var log(Var a);
Var softmax_rows(Var a);
/// Zero-mean unit-variance normalization of each row (no gain or bias).
Var layer_norm_rows(Var a, double eps = 1e-5);
Var row_sum(Var a);
Var sum(Var a);
Var mean(Var a);
/// Row i of the result is the mean of rows groups[i] of `a`.
Var group_mean(Var a, const std::vector<std::vector<std::size_t>>& groups);
/// Row i of the result is the columnwise max over rows groups[i]; ties take the first row.
Var group_max(Var a, const std::vector<std::vector<std::size_t>>& groups);
Var concat_cols(Var a, Var b);
Var concat_rows(std::span<const Var> parts);
Var gather_rows(Var a, std::span<const std::size_t> rows);
/// Copy of `base` with rows[k] replaced by row k of `values`.
Var scatter_rows(Var base, std::span<const std::size_t> rows, Var values);
Var slice_cols(Var a, std::size_t start, std::size_t count);
/// Inverted dropout; a no-op when rate == 0.
Var dropout(Var a, double rate, Rng& rng);
/// Elementwise clamp; the gradient is zero outside [lo, hi].
Var clamp(Var a, double lo, double hi);

/// Single-direction LSTM over a padded batch. Gate column blocks are ordered
/// input, forget, cell, output. Padding positions emit zeros and carry state.
Var lstm(Var inputs, Var w_input, Var w_hidden, Var bias, const SequenceLayout& layout,
         bool reverse);

/// Mean binary cross-entropy of probabilities `p` against 0/1 `labels`, with
/// probabilities clamped to [eps, 1 - eps].
Var binary_cross_entropy(Var p, const Array& labels, double eps = 1e-10);
/// Mean over entries of 0.5 * (KL(p||q) + KL(q||p)) for Bernoulli(p), Bernoulli(q).
Var symmetric_bernoulli_kl(Var p, Var q, double eps = 1e-10);

}  // namespace ad
}  // namespace corelation
