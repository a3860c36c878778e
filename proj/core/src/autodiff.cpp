#include "corelation/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace corelation {

void Parameter::zero_grad() {
    if (grad.shape() != value.shape()) {
        grad = Array(value.shape());
    } else {
        grad.fill(0.0);
    }
}

const Array& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Array value) {
    if (!value.all_finite()) throw NumericError("constant: non-finite input");
    Node node;
    node.value = std::move(value);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& param) {
    for (const auto& [p, id] : param_nodes_) {
        if (p == &param) return Var(this, id);
    }
    if (!param.value.all_finite()) throw NumericError("parameter " + param.name + " is non-finite");
    Node node;
    node.requires_grad = record_;
    node.param = &param;
    nodes_.push_back(std::move(node));
    param_nodes_.emplace_back(&param, nodes_.size() - 1);
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Array value, std::span<const Var> inputs, BackwardFn fn, const char* op) {
    if (!value.all_finite()) {
        throw NumericError(std::string(op) + ": non-finite output of shape " + value.shape_string());
    }
    Node node;
    node.value = std::move(value);
    if (record_) {
        for (const Var& in : inputs) {
            if (nodes_[in.id()].requires_grad) {
                node.requires_grad = true;
                break;
            }
        }
    }
    if (node.requires_grad) node.backward = std::move(fn);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Array& Tape::grad(std::size_t id) {
    Node& node = nodes_[id];
    if (!node.has_grad) {
        node.grad = Array(value(id).shape());
        node.has_grad = true;
    }
    return node.grad;
}

void Tape::backward(Var loss) {
    if (loss.tape_ != this) throw NumericError("backward: loss belongs to another tape");
    const Array& lv = value(loss.id());
    if (lv.size() != 1) throw NumericError("backward: loss must be scalar, got " + lv.shape_string());
    if (!nodes_[loss.id()].requires_grad) return;
    grad(loss.id())[0] = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (!node.has_grad || !node.backward) continue;
        node.backward(*this, node.grad);
    }
    for (const auto& [param, id] : param_nodes_) {
        const Node& node = nodes_[id];
        if (!node.has_grad) continue;
        if (param->grad.shape() != param->value.shape()) param->grad = Array(param->value.shape());
        auto dst = param->grad.data();
        auto src = node.grad.data();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
}

const Array* Tape::gradient(Var v) const {
    const Node& node = nodes_[v.id()];
    return node.has_grad ? &node.grad : nullptr;
}

namespace ad {
namespace {

bool row_broadcast(const Array& a, const Array& b) {
    return b.rows() == 1 && a.rows() != 1 && b.cols() == a.cols();
}

void require_matmul(const Array& a, std::size_t inner_b, const Array& b, const char* op) {
    if (a.cols() != inner_b) {
        throw NumericError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                           b.shape_string());
    }
}

// out(r x c) += a(r x k) * b(k x c)
void gemm_nn(const Array& a, const Array& b, Array& out) {
    const std::size_t r = a.rows(), k = a.cols(), c = b.cols();
    for (std::size_t i = 0; i < r; ++i) {
        double* __restrict o = &out(i, 0);
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a(i, p);
            if (av == 0.0) continue;
            const double* __restrict br = b.row(p).data();
            for (std::size_t j = 0; j < c; ++j) o[j] += av * br[j];
        }
    }
}

// out(r x c) += a(r x k) * b(c x k)^T
void gemm_nt(const Array& a, const Array& b, Array& out) {
    const std::size_t r = a.rows(), k = a.cols(), c = b.rows();
    for (std::size_t i = 0; i < r; ++i) {
        const double* __restrict ar = a.row(i).data();
        for (std::size_t j = 0; j < c; ++j) {
            const double* __restrict br = b.row(j).data();
            double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
            std::size_t p = 0;
            for (; p + 4 <= k; p += 4) {
                s0 += ar[p] * br[p];
                s1 += ar[p + 1] * br[p + 1];
                s2 += ar[p + 2] * br[p + 2];
                s3 += ar[p + 3] * br[p + 3];
            }
            for (; p < k; ++p) s0 += ar[p] * br[p];
            out(i, j) += (s0 + s1) + (s2 + s3);
        }
    }
}

// out(k x c) += a(r x k)^T * b(r x c)
void gemm_tn(const Array& a, const Array& b, Array& out) {
    const std::size_t r = a.rows(), k = a.cols(), c = b.cols();
    for (std::size_t i = 0; i < r; ++i) {
        const double* __restrict br = b.row(i).data();
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a(i, p);
            if (av == 0.0) continue;
            double* __restrict o = &out(p, 0);
            for (std::size_t j = 0; j < c; ++j) o[j] += av * br[j];
        }
    }
}

Array like(const Array& a) { return Array(a.shape()); }

double sigm(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

template <typename F, typename D>
Var unary(Var a, const char* op, F f, D dfdx_from_xy) {
    const Array& av = a.value();
    Array out = like(av);
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
    return a.tape().record(std::move(out), {a}, [a, dfdx_from_xy](Tape& t, const Array& g) {
        const Array& x = t.value(a.id());
        Array& ga = t.grad(a.id());
        // The output value is not captured; derivatives needing y recompute it from x.
        for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g[i] * dfdx_from_xy(x[i]);
    }, op);
}

}  // namespace

Var matmul(Var a, Var b) {
    const Array& av = a.value();
    const Array& bv = b.value();
    require_matmul(av, bv.rows(), bv, "matmul");
    Array out = Array::matrix(av.rows(), bv.cols());
    gemm_nn(av, bv, out);
    return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Array& g) {
        if (t.requires_grad(a)) gemm_nt(g, t.value(b.id()), t.grad(a.id()));
        if (t.requires_grad(b)) gemm_tn(t.value(a.id()), g, t.grad(b.id()));
    }, "matmul");
}

Var matmul_nt(Var a, Var b) {
    const Array& av = a.value();
    const Array& bv = b.value();
    require_matmul(av, bv.cols(), bv, "matmul_nt");
    Array out = Array::matrix(av.rows(), bv.rows());
    gemm_nt(av, bv, out);
    return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Array& g) {
        if (t.requires_grad(a)) gemm_nn(g, t.value(b.id()), t.grad(a.id()));
        if (t.requires_grad(b)) gemm_tn(g, t.value(a.id()), t.grad(b.id()));
    }, "matmul_nt");
}

Var transpose(Var a) {
    const Array& av = a.value();
    Array out = Array::matrix(av.cols(), av.rows());
    for (std::size_t i = 0; i < av.rows(); ++i)
        for (std::size_t j = 0; j < av.cols(); ++j) out(j, i) = av(i, j);
    return a.tape().record(std::move(out), {a}, [a](Tape& t, const Array& g) {
        Array& ga = t.grad(a.id());
        for (std::size_t i = 0; i < ga.rows(); ++i)
            for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g(j, i);
    }, "transpose");
}

Var add(Var a, Var b) {
    const Array& av = a.value();
    const Array& bv = b.value();
    const bool bcast = row_broadcast(av, bv);
    if (!bcast) require_same_shape(av, bv, "add");
    Array out = av;
    const std::size_t c = av.cols();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bcast ? bv[i % c] : bv[i];
    return a.tape().record(std::move(out), {a, b}, [a, b, bcast, c](Tape& t, const Array& g) {
        if (t.requires_grad(a)) {
            Array& ga = t.grad(a.id());
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.requires_grad(b)) {
            Array& gb = t.grad(b.id());
            for (std::size_t i = 0; i < g.size(); ++i) gb[bcast ? i % c : i] += g[i];
        }
    }, "add");
}

Var sub(Var a, Var b) {
    const Array& av = a.value();
    const Array& bv = b.value();
    require_same_shape(av, bv, "sub");
    Array out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Array& g) {
        if (t.requires_grad(a)) {
            Array& ga = t.grad(a.id());
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.requires_grad(b)) {
            Array& gb = t.grad(b.id());
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    }, "sub");
}

Var mul(Var a, Var b) {
    const Array& av = a.value();
    const Array& bv = b.value();
    const bool bcast = row_broadcast(av, bv);
    if (!bcast) require_same_shape(av, bv, "mul");
    Array out = av;
    const std::size_t c = av.cols();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bcast ? bv[i % c] : bv[i];
    return a.tape().record(std::move(out), {a, b}, [a, b, bcast, c](Tape& t, const Array& g) {
        const Array& x = t.value(a.id());
        const Array& y = t.value(b.id());
        if (t.requires_grad(a)) {
            Array& ga = t.grad(a.id());
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (bcast ? y[i % c] : y[i]);
        }
        if (t.requires_grad(b)) {
            Array& gb = t.grad(b.id());
            for (std::size_t i = 0; i < g.size(); ++i) gb[bcast ? i % c : i] += g[i] * x[i];
        }
    }, "mul");
}

Var scale(Var a, double factor) { return affine(a, factor, 0.0); }

Var affine(Var a, double factor, double shift) {
    const Array& av = a.value();
    Array out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * out[i] + shift;
    return a.tape().record(std::move(out), {a}, [a, factor](Tape& t, const Array& g) {
        Array& ga = t.grad(a.id());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
    }, "affine");
}

Var sigmoid(Var a) {
    return unary(a, "sigmoid", sigm, [](double x) {
        const double s = sigm(x);
        return s * (1.0 - s);
    });
}

Var tanh(Var a) {
    return unary(a, "tanh", [](double x) { return std::tanh(x); }, [](double x) {
        const double y = std::tanh(x);
        return 1.0 - y * y;
    });
}

Var relu(Var a) {
    return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var gelu(Var a) {
    return unary(a, "gelu", [](double x) { return 0.5 * x * std::erfc(-x * M_SQRT1_2); }, [](double x) {
        const double cdf = 0.5 * std::erfc(-x * M_SQRT1_2);
        const double pdf = std::exp(-0.5 * x * x) * (0.5 * M_2_SQRTPI * M_SQRT1_2);
        return cdf + x * pdf;
    });
}

Var log(Var a) {
    return unary(a, "log", [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Var softmax_rows(Var a) {
    const Array& av = a.value();
    Array out = like(av);
    const std::size_t c = av.cols();
    for (std::size_t i = 0; i < av.rows(); ++i) {
        auto x = av.row(i);
        auto y = out.row(i);
        const double m = *std::max_element(x.begin(), x.end());
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += (y[j] = std::exp(x[j] - m));
        for (std::size_t j = 0; j < c; ++j) y[j] /= z;
    }
    const std::size_t out_id = a.tape().next_id();
    return a.tape().record(std::move(out), {a}, [a, out_id](Tape& t, const Array& g) {
        const Array& y = t.value(out_id);
        Array& ga = t.grad(a.id());
        for (std::size_t i = 0; i < y.rows(); ++i) {
            auto yr = y.row(i);
            auto gr = g.row(i);
            double dot = 0.0;
            for (std::size_t j = 0; j < yr.size(); ++j) dot += gr[j] * yr[j];
            for (std::size_t j = 0; j < yr.size(); ++j) ga(i, j) += yr[j] * (gr[j] - dot);
        }
    }, "softmax_rows");
}

Var layer_norm_rows(Var a, double eps) {
    const Array& av = a.value();
    const std::size_t r = av.rows(), c = av.cols();
    Array out = like(av);
    std::vector<double> inv_std(r);
    for (std::size_t i = 0; i < r; ++i) {
        auto x = av.row(i);
        double mu = 0.0;
        for (double v : x) mu += v;
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (double v : x) var += (v - mu) * (v - mu);
        var /= static_cast<double>(c);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < c; ++j) out(i, j) = (x[j] - mu) * inv_std[i];
    }
    Tape& tape = a.tape();
    const std::size_t y_id = tape.next_id();
    return tape.record(std::move(out), {a}, [a, y_id, inv_std](Tape& t, const Array& g) {
        const Array& yv = t.value(y_id);
        Array& ga = t.grad(a.id());
        const std::size_t cols = yv.cols();
        const double n = static_cast<double>(cols);
        for (std::size_t i = 0; i < yv.rows(); ++i) {
            double g_mean = 0.0, gy_mean = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
                g_mean += g(i, j);
                gy_mean += g(i, j) * yv(i, j);
            }
            g_mean /= n;
            gy_mean /= n;
            for (std::size_t j = 0; j < cols; ++j)
                ga(i, j) += inv_std[i] * (g(i, j) - g_mean - yv(i, j) * gy_mean);
        }
    }, "layer_norm_rows");
}

Var row_sum(Var a) {
    const Array& av = a.value();
    Array out = Array::matrix(av.rows(), 1);
    for (std::size_t i = 0; i < av.rows(); ++i) {
        double s = 0.0;
        for (double v : av.row(i)) s += v;
        out[i] = s;
    }
    return a.tape().record(std::move(out), {a}, [a](Tape& t, const Array& g) {
        Array& ga = t.grad(a.id());
        for (std::size_t i = 0; i < ga.rows(); ++i)
            for (double& v : ga.row(i)) v += g[i];
    }, "row_sum");
}

Var sum(Var a) {
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    return a.tape().record(Array::scalar(s), {a}, [a](Tape& t, const Array& g) {
        Array& ga = t.grad(a.id());
        for (double& v : ga.data()) v += g[0];
    }, "sum");
}

Var mean(Var a) {
    const double n = static_cast<double>(a.value().size());
    return scale(sum(a), 1.0 / n);
}

Var group_mean(Var a, const std::vector<std::vector<std::size_t>>& groups) {
    const Array& av = a.value();
    const std::size_t c = av.cols();
    Array out = Array::matrix(groups.size(), c);
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const auto& rows = groups[gi];
        if (rows.empty()) throw NumericError("group_mean: empty group");
        for (std::size_t r : rows) {
            if (r >= av.rows()) throw NumericError("group_mean: row index out of range");
            for (std::size_t j = 0; j < c; ++j) out(gi, j) += av(r, j);
        }
        const double inv = 1.0 / static_cast<double>(rows.size());
        for (double& v : out.row(gi)) v *= inv;
    }
    return a.tape().record(std::move(out), {a}, [a, groups](Tape& t, const Array& g) {
        Array& ga = t.grad(a.id());
        for (std::size_t gi = 0; gi < groups.size(); ++gi) {
            const double inv = 1.0 / static_cast<double>(groups[gi].size());
            for (std::size_t r : groups[gi])
                for (std::size_t j = 0; j < ga.cols(); ++j) ga(r, j) += inv * g(gi, j);
        }
    }, "group_mean");
}

Var group_max(Var a, const std::vector<std::vector<std::size_t>>& groups) {
    const Array& av = a.value();
    const std::size_t c = av.cols();
    Array out = Array::matrix(groups.size(), c);
    std::vector<std::size_t> argmax(groups.size() * c);
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const auto& rows = groups[gi];
        if (rows.empty()) throw NumericError("group_max: empty group");
        for (std::size_t j = 0; j < c; ++j) {
            std::size_t best = rows[0];
            for (std::size_t r : rows) {
                if (r >= av.rows()) throw NumericError("group_max: row index out of range");
                if (av(r, j) > av(best, j)) best = r;
            }
            out(gi, j) = av(best, j);
            argmax[gi * c + j] = best;
        }
    }
    return a.tape().record(std::move(out), {a}, [a, argmax, c](Tape& t, const Array& g) {
        Array& ga = t.grad(a.id());
        for (std::size_t k = 0; k < argmax.size(); ++k) ga(argmax[k], k % c) += g[k];
    }, "group_max");
}

Var concat_cols(Var a, Var b) {
    const Array& av = a.value();
    const Array& bv = b.value();
    if (av.rows() != bv.rows()) {
        throw NumericError("concat_cols: shape mismatch " + av.shape_string() + " vs " + bv.shape_string());
    }
    const std::size_t ca = av.cols(), cb = bv.cols();
    Array out = Array::matrix(av.rows(), ca + cb);
    for (std::size_t i = 0; i < av.rows(); ++i) {
        std::copy(av.row(i).begin(), av.row(i).end(), out.row(i).begin());
        std::copy(bv.row(i).begin(), bv.row(i).end(), out.row(i).begin() + ca);
    }
    return a.tape().record(std::move(out), {a, b}, [a, b, ca, cb](Tape& t, const Array& g) {
        if (t.requires_grad(a)) {
            Array& ga = t.grad(a.id());
            for (std::size_t i = 0; i < ga.rows(); ++i)
                for (std::size_t j = 0; j < ca; ++j) ga(i, j) += g(i, j);
        }
        if (t.requires_grad(b)) {
            Array& gb = t.grad(b.id());
            for (std::size_t i = 0; i < gb.rows(); ++i)
                for (std::size_t j = 0; j < cb; ++j) gb(i, j) += g(i, ca + j);
        }
    }, "concat_cols");
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw NumericError("concat_rows: no inputs");
    const std::size_t c = parts[0].cols();
    std::size_t total = 0;
    for (const Var& p : parts) {
        if (p.cols() != c) {
            throw NumericError("concat_rows: shape mismatch " + parts[0].value().shape_string() +
                               " vs " + p.value().shape_string());
        }
        total += p.rows();
    }
    Array out = Array::matrix(total, c);
    std::size_t offset = 0;
    for (const Var& p : parts) {
        const auto src = p.value().data();
        std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset * c));
        offset += p.rows();
    }
    std::vector<Var> inputs(parts.begin(), parts.end());
    return parts[0].tape().record(std::move(out), parts, [inputs](Tape& t, const Array& g) {
        std::size_t off = 0;
        for (const Var& p : inputs) {
            const std::size_t n = p.value().size();
            if (t.requires_grad(p)) {
                Array& gp = t.grad(p.id());
                for (std::size_t k = 0; k < n; ++k) gp[k] += g[off + k];
            }
            off += n;
        }
    }, "concat_rows");
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
    const Array& av = a.value();
    const std::size_t c = av.cols();
    Array out = Array::matrix(rows.size(), c);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k] >= av.rows()) {
            throw NumericError("gather_rows: index " + std::to_string(rows[k]) + " out of range for " +
                               av.shape_string());
        }
        std::copy(av.row(rows[k]).begin(), av.row(rows[k]).end(), out.row(k).begin());
    }
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    return a.tape().record(std::move(out), {a}, [a, idx](Tape& t, const Array& g) {
        Array& ga = t.grad(a.id());
        for (std::size_t k = 0; k < idx.size(); ++k) {
            auto dst = ga.row(idx[k]);
            auto src = g.row(k);
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
    }, "gather_rows");
}

Var scatter_rows(Var base, std::span<const std::size_t> rows, Var values) {
    const Array& bv = base.value();
    const Array& vv = values.value();
    if (vv.rows() != rows.size() || vv.cols() != bv.cols()) {
        throw NumericError("scatter_rows: shape mismatch " + bv.shape_string() + " vs " + vv.shape_string());
    }
    Array out = bv;
    std::vector<char> replaced(bv.rows(), 0);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k] >= bv.rows()) throw NumericError("scatter_rows: index out of range");
        if (replaced[rows[k]]) throw NumericError("scatter_rows: duplicate index");
        replaced[rows[k]] = 1;
        std::copy(vv.row(k).begin(), vv.row(k).end(), out.row(rows[k]).begin());
    }
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    return base.tape().record(std::move(out), {base, values},
                              [base, values, idx, replaced](Tape& t, const Array& g) {
        if (t.requires_grad(base)) {
            Array& gb = t.grad(base.id());
            for (std::size_t i = 0; i < gb.rows(); ++i) {
                if (replaced[i]) continue;
                auto dst = gb.row(i);
                auto src = g.row(i);
                for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
            }
        }
        if (t.requires_grad(values)) {
            Array& gv = t.grad(values.id());
            for (std::size_t k = 0; k < idx.size(); ++k) {
                auto dst = gv.row(k);
                auto src = g.row(idx[k]);
                for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
            }
        }
    }, "scatter_rows");
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
    const Array& av = a.value();
    if (start + count > av.cols()) throw NumericError("slice_cols: range exceeds " + av.shape_string());
    Array out = Array::matrix(av.rows(), count);
    for (std::size_t i = 0; i < av.rows(); ++i)
        for (std::size_t j = 0; j < count; ++j) out(i, j) = av(i, start + j);
    return a.tape().record(std::move(out), {a}, [a, start, count](Tape& t, const Array& g) {
        Array& ga = t.grad(a.id());
        for (std::size_t i = 0; i < ga.rows(); ++i)
            for (std::size_t j = 0; j < count; ++j) ga(i, start + j) += g(i, j);
    }, "slice_cols");
}

Var dropout(Var a, double rate, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) throw NumericError("dropout: rate must lie in [0, 1)");
    if (rate == 0.0) return a;
    const Array& av = a.value();
    Array mask = like(av);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng.bernoulli(rate) ? 0.0 : keep_scale;
    Array out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
    return a.tape().record(std::move(out), {a}, [a, mask](Tape& t, const Array& g) {
        Array& ga = t.grad(a.id());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
    }, "dropout");
}

Var clamp(Var a, double lo, double hi) {
    return unary(a, "clamp", [lo, hi](double x) { return std::clamp(x, lo, hi); },
                 [lo, hi](double x) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var lstm(Var inputs, Var w_input, Var w_hidden, Var bias, const SequenceLayout& layout, bool reverse) {
    const Array& x = inputs.value();
    const Array& wi = w_input.value();
    const Array& wh = w_hidden.value();
    const Array& bv = bias.value();
    const std::size_t hidden = wh.rows();
    const std::size_t g4 = 4 * hidden;
    const std::size_t batch = layout.batch();
    const std::size_t steps = layout.steps;
    if (wh.cols() != g4 || wi.cols() != g4 || bv.cols() != g4 || bv.rows() != 1) {
        throw NumericError("lstm: weight shape mismatch " + wi.shape_string() + " / " + wh.shape_string() +
                           " / " + bv.shape_string());
    }
    if (x.rows() != steps * batch || x.cols() != wi.rows()) {
        throw NumericError("lstm: input shape mismatch " + x.shape_string() + " vs " + wi.shape_string());
    }
    for (std::size_t len : layout.lengths) {
        if (len > steps) throw NumericError("lstm: sequence length exceeds step count");
    }

    Array pre = Array::matrix(steps * batch, g4);
    gemm_nn(x, wi, pre);
    // Saved activations, one row per (t, b): i, f, g, o, tanh(c), c, c_prev, h_prev.
    Array gates = Array::matrix(steps * batch, g4);
    Array cell = Array::matrix(steps * batch, hidden);
    Array cell_tanh = Array::matrix(steps * batch, hidden);
    Array cell_prev = Array::matrix(steps * batch, hidden);
    Array hidden_prev = Array::matrix(steps * batch, hidden);
    Array out = Array::matrix(steps * batch, hidden);

    Array h = Array::matrix(batch, hidden);
    Array c = Array::matrix(batch, hidden);
    std::vector<double> z(g4);
    for (std::size_t s = 0; s < steps; ++s) {
        const std::size_t t = reverse ? steps - 1 - s : s;
        for (std::size_t b = 0; b < batch; ++b) {
            if (!layout.valid(t, b)) continue;
            const std::size_t row = layout.row(t, b);
            for (std::size_t k = 0; k < g4; ++k) z[k] = pre(row, k) + bv[k];
            for (std::size_t p = 0; p < hidden; ++p) {
                const double hv = h(b, p);
                if (hv == 0.0) continue;
                const double* wr = wh.row(p).data();
                for (std::size_t k = 0; k < g4; ++k) z[k] += hv * wr[k];
            }
            for (std::size_t j = 0; j < hidden; ++j) {
                const double ig = sigm(z[j]);
                const double fg = sigm(z[hidden + j]);
                const double gg = std::tanh(z[2 * hidden + j]);
                const double og = sigm(z[3 * hidden + j]);
                const double cp = c(b, j);
                const double cn = fg * cp + ig * gg;
                const double ct = std::tanh(cn);
                gates(row, j) = ig;
                gates(row, hidden + j) = fg;
                gates(row, 2 * hidden + j) = gg;
                gates(row, 3 * hidden + j) = og;
                cell_prev(row, j) = cp;
                hidden_prev(row, j) = h(b, j);
                cell(row, j) = cn;
                cell_tanh(row, j) = ct;
                out(row, j) = og * ct;
            }
            for (std::size_t j = 0; j < hidden; ++j) {
                c(b, j) = cell(row, j);
                h(b, j) = out(row, j);
            }
        }
    }

    SequenceLayout lay = layout;
    return inputs.tape().record(
        std::move(out), {inputs, w_input, w_hidden, bias},
        [inputs, w_input, w_hidden, bias, lay, reverse, hidden, gates = std::move(gates),
         cell_tanh = std::move(cell_tanh), cell_prev = std::move(cell_prev),
         hidden_prev = std::move(hidden_prev)](Tape& t, const Array& g) {
            const std::size_t g4 = 4 * hidden;
            const std::size_t batch = lay.batch();
            const std::size_t steps = lay.steps;
            const Array& whv = t.value(w_hidden.id());
            Array dpre = Array::matrix(steps * batch, g4);
            Array dh_next = Array::matrix(batch, hidden);
            Array dc_next = Array::matrix(batch, hidden);
            for (std::size_t s = steps; s-- > 0;) {
                const std::size_t tt = reverse ? steps - 1 - s : s;
                for (std::size_t b = 0; b < batch; ++b) {
                    if (!lay.valid(tt, b)) continue;
                    const std::size_t row = lay.row(tt, b);
                    double* dz = &dpre(row, 0);
                    for (std::size_t j = 0; j < hidden; ++j) {
                        const double ig = gates(row, j);
                        const double fg = gates(row, hidden + j);
                        const double gg = gates(row, 2 * hidden + j);
                        const double og = gates(row, 3 * hidden + j);
                        const double ct = cell_tanh(row, j);
                        const double dh = g(row, j) + dh_next(b, j);
                        const double dout = dh * ct;
                        const double dc = dc_next(b, j) + dh * og * (1.0 - ct * ct);
                        dz[j] = dc * gg * ig * (1.0 - ig);
                        dz[hidden + j] = dc * cell_prev(row, j) * fg * (1.0 - fg);
                        dz[2 * hidden + j] = dc * ig * (1.0 - gg * gg);
                        dz[3 * hidden + j] = dout * og * (1.0 - og);
                        dc_next(b, j) = dc * fg;
                    }
                    for (std::size_t p = 0; p < hidden; ++p) {
                        const double* wr = whv.row(p).data();
                        double acc = 0.0;
                        for (std::size_t k = 0; k < g4; ++k) acc += dz[k] * wr[k];
                        dh_next(b, p) = acc;
                    }
                }
            }
            if (t.requires_grad(w_hidden)) {
                Array& gwh = t.grad(w_hidden.id());
                gemm_tn(hidden_prev, dpre, gwh);
            }
            if (t.requires_grad(bias)) {
                Array& gb = t.grad(bias.id());
                for (std::size_t r = 0; r < dpre.rows(); ++r)
                    for (std::size_t k = 0; k < g4; ++k) gb[k] += dpre(r, k);
            }
            if (t.requires_grad(w_input)) gemm_tn(t.value(inputs.id()), dpre, t.grad(w_input.id()));
            if (t.requires_grad(inputs)) gemm_nt(dpre, t.value(w_input.id()), t.grad(inputs.id()));
        },
        "lstm");
}

Var binary_cross_entropy(Var p, const Array& labels, double eps) {
    const Array& pv = p.value();
    require_same_shape(pv, labels, "binary_cross_entropy");
    const double n = static_cast<double>(pv.size());
    double total = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
        const double q = std::clamp(pv[i], eps, 1.0 - eps);
        total += -(labels[i] * std::log(q) + (1.0 - labels[i]) * std::log(1.0 - q));
    }
    return p.tape().record(Array::scalar(total / n), {p}, [p, labels, eps, n](Tape& t, const Array& g) {
        const Array& x = t.value(p.id());
        Array& gp = t.grad(p.id());
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (x[i] < eps || x[i] > 1.0 - eps) continue;
            gp[i] += g[0] / n * (-(labels[i] / x[i]) + (1.0 - labels[i]) / (1.0 - x[i]));
        }
    }, "binary_cross_entropy");
}

Var symmetric_bernoulli_kl(Var p, Var q, double eps) {
    const Array& pv = p.value();
    const Array& qv = q.value();
    require_same_shape(pv, qv, "symmetric_bernoulli_kl");
    const double n = static_cast<double>(pv.size());
    // 0.5 * (KL(a||b) + KL(b||a)) = 0.5 * (a - b) * (logit(a) - logit(b))
    auto logit = [](double v) { return std::log(v) - std::log(1.0 - v); };
    double total = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
        const double a = std::clamp(pv[i], eps, 1.0 - eps);
        const double b = std::clamp(qv[i], eps, 1.0 - eps);
        total += 0.5 * (a - b) * (logit(a) - logit(b));
    }
    return p.tape().record(Array::scalar(total / n), {p, q}, [p, q, eps, n, logit](Tape& t, const Array& g) {
        const Array& xa = t.value(p.id());
        const Array& xb = t.value(q.id());
        const bool ga_on = t.requires_grad(p);
        const bool gb_on = t.requires_grad(q);
        for (std::size_t i = 0; i < xa.size(); ++i) {
            const bool a_in = xa[i] >= eps && xa[i] <= 1.0 - eps;
            const bool b_in = xb[i] >= eps && xb[i] <= 1.0 - eps;
            const double a = std::clamp(xa[i], eps, 1.0 - eps);
            const double b = std::clamp(xb[i], eps, 1.0 - eps);
            const double dl = logit(a) - logit(b);
            const double w = g[0] / n * 0.5;
            if (ga_on && a_in) t.grad(p.id())[i] += w * (dl + (a - b) / (a * (1.0 - a)));
            if (gb_on && b_in) t.grad(q.id())[i] += w * (-dl - (a - b) / (b * (1.0 - b)));
        }
    }, "symmetric_bernoulli_kl");
}

}  // namespace ad
}  // namespace corelation
