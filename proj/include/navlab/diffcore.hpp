#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "navlab/errors.hpp"

namespace navlab::diff {

// Dense row-major 2D tensor. Vectors are 1 x n, scalars 1 x 1.
template <class S>
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<S> data;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, S(0)) {}
    Tensor(int r, int c, std::vector<S> d) : rows(r), cols(c), data(std::move(d)) {
        if (data.size() != static_cast<std::size_t>(r) * c)
            throw InputError("tensor data length does not match shape");
    }

    std::size_t numel() const { return data.size(); }
    S& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    S at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    template <class T>
    Tensor<T> cast() const {
        Tensor<T> out;
        out.rows = rows;
        out.cols = cols;
        out.data.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<T>(data[i]);
        return out;
    }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

namespace detail {

// C[m x n] (+)= A[m x k] * B[k x n]
template <class S>
void mm_nn(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
    if (!accumulate) std::fill(c, c + static_cast<std::size_t>(m) * n, S(0));
    for (int i = 0; i < m; ++i) {
        const S* arow = a + static_cast<std::size_t>(i) * k;
        S* crow = c + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const S av = arow[p];
            if (av == S(0)) continue;
            const S* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m x n] (+)= A[m x k] * B[n x k]^T
template <class S>
void mm_nt(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        const S* arow = a + static_cast<std::size_t>(i) * k;
        S* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const S* brow = b + static_cast<std::size_t>(j) * k;
            S acc = S(0);
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            if (accumulate)
                crow[j] += acc;
            else
                crow[j] = acc;
        }
    }
}

// C[m x n] (+)= A[k x m]^T * B[k x n]
template <class S>
void mm_tn(const S* a, const S* b, S* c, int k, int m, int n, bool accumulate) {
    if (!accumulate) std::fill(c, c + static_cast<std::size_t>(m) * n, S(0));
    for (int p = 0; p < k; ++p) {
        const S* arow = a + static_cast<std::size_t>(p) * m;
        const S* brow = b + static_cast<std::size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const S av = arow[i];
            if (av == S(0)) continue;
            S* crow = c + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace detail

// Define-by-run computation record with reverse-mode differentiation.
// Nodes are appended in execution order, so a reverse scan is a valid
// backward topological order. Single-threaded by design.
template <class S>
class Graph {
public:
    using NodeId = int;

    enum class Op {
        Constant,
        Leaf,
        Matmul,
        MatmulNT,
        Add,
        MulConst,
        GatherRows,
        LayerNorm,
        Softmax,
        Gelu,
        Transpose,
        Reshape,
        ConcatRows,
        SliceRows,
        CrossEntropy,
        Mse,
        Sum,
    };

    NodeId constant(Tensor<S> t) { return push(Op::Constant, std::move(t), {}, false); }
    NodeId leaf(Tensor<S> t) { return push(Op::Leaf, std::move(t), {}, true); }

    NodeId matmul(NodeId a, NodeId b) {
        const auto& ta = val(a);
        const auto& tb = val(b);
        if (ta.cols != tb.rows) throw InputError("matmul: inner dims differ");
        Tensor<S> out(ta.rows, tb.cols);
        detail::mm_nn(ta.data.data(), tb.data.data(), out.data.data(), ta.rows, ta.cols, tb.cols,
                      false);
        return push(Op::Matmul, std::move(out), {a, b});
    }

    // a * b^T
    NodeId matmul_nt(NodeId a, NodeId b) {
        const auto& ta = val(a);
        const auto& tb = val(b);
        if (ta.cols != tb.cols) throw InputError("matmul_nt: inner dims differ");
        Tensor<S> out(ta.rows, tb.rows);
        detail::mm_nt(ta.data.data(), tb.data.data(), out.data.data(), ta.rows, ta.cols, tb.rows,
                      false);
        return push(Op::MatmulNT, std::move(out), {a, b});
    }

    NodeId add(NodeId a, NodeId b) {
        const auto& ta = val(a);
        const auto& tb = val(b);
        if (ta.rows != tb.rows || ta.cols != tb.cols) throw InputError("add: shape mismatch");
        Tensor<S> out = ta;
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
        return push(Op::Add, std::move(out), {a, b});
    }

    NodeId mul_const(NodeId a, S k) {
        Tensor<S> out = val(a);
        for (auto& v : out.data) v *= k;
        const NodeId id = push(Op::MulConst, std::move(out), {a});
        nodes_[static_cast<std::size_t>(id)].scalar = k;
        return id;
    }

    NodeId gather_rows(NodeId table, std::vector<int> idx) {
        const auto& t = val(table);
        Tensor<S> out(static_cast<int>(idx.size()), t.cols);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] < 0 || idx[i] >= t.rows) throw InputError("gather_rows: index out of range");
            std::copy_n(t.data.data() + static_cast<std::size_t>(idx[i]) * t.cols, t.cols,
                        out.data.data() + i * static_cast<std::size_t>(t.cols));
        }
        const NodeId id = push(Op::GatherRows, std::move(out), {table});
        nodes_[static_cast<std::size_t>(id)].aux = std::move(idx);
        return id;
    }

    // Per-row (x - mean) / sqrt(var + eps) * gamma + beta.
    NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, S eps = S(1e-5)) {
        const auto& tx = val(x);
        const auto& tg = val(gamma);
        const auto& tb = val(beta);
        if (tg.rows != 1 || tg.cols != tx.cols || tb.rows != 1 || tb.cols != tx.cols)
            throw InputError("layer_norm: gamma/beta must be 1 x cols");
        Tensor<S> out(tx.rows, tx.cols);
        std::vector<S> saved(static_cast<std::size_t>(tx.rows) * 2);
        const int d = tx.cols;
        for (int r = 0; r < tx.rows; ++r) {
            const S* xr = tx.data.data() + static_cast<std::size_t>(r) * d;
            S mean = S(0);
            for (int j = 0; j < d; ++j) mean += xr[j];
            mean /= static_cast<S>(d);
            S var = S(0);
            for (int j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
            var /= static_cast<S>(d);
            const S rstd = S(1) / std::sqrt(var + eps);
            saved[static_cast<std::size_t>(r) * 2] = mean;
            saved[static_cast<std::size_t>(r) * 2 + 1] = rstd;
            S* yr = out.data.data() + static_cast<std::size_t>(r) * d;
            for (int j = 0; j < d; ++j)
                yr[j] = (xr[j] - mean) * rstd * tg.data[static_cast<std::size_t>(j)] +
                        tb.data[static_cast<std::size_t>(j)];
        }
        const NodeId id = push(Op::LayerNorm, std::move(out), {x, gamma, beta});
        nodes_[static_cast<std::size_t>(id)].saved = std::move(saved);
        nodes_[static_cast<std::size_t>(id)].scalar = eps;
        return id;
    }

    // Row-wise, max-subtracted softmax.
    NodeId softmax(NodeId x) {
        Tensor<S> out = val(x);
        const int d = out.cols;
        for (int r = 0; r < out.rows; ++r) {
            S* row = out.data.data() + static_cast<std::size_t>(r) * d;
            S mx = row[0];
            for (int j = 1; j < d; ++j) mx = std::max(mx, row[j]);
            S sum = S(0);
            for (int j = 0; j < d; ++j) {
                row[j] = std::exp(row[j] - mx);
                sum += row[j];
            }
            for (int j = 0; j < d; ++j) row[j] /= sum;
        }
        return push(Op::Softmax, std::move(out), {x});
    }

    NodeId gelu(NodeId x) {
        Tensor<S> out = val(x);
        for (auto& v : out.data)
            v = S(0.5) * v * (S(1) + std::erf(v / std::numbers::sqrt2_v<S>));
        return push(Op::Gelu, std::move(out), {x});
    }

    NodeId transpose(NodeId x) {
        const auto& t = val(x);
        Tensor<S> out(t.cols, t.rows);
        for (int r = 0; r < t.rows; ++r)
            for (int c = 0; c < t.cols; ++c) out.at(c, r) = t.at(r, c);
        return push(Op::Transpose, std::move(out), {x});
    }

    NodeId reshape(NodeId x, int rows, int cols) {
        const auto& t = val(x);
        if (static_cast<std::size_t>(rows) * cols != t.numel())
            throw InputError("reshape: element count differs");
        Tensor<S> out(rows, cols, t.data);
        return push(Op::Reshape, std::move(out), {x});
    }

    NodeId concat_rows(const std::vector<NodeId>& parts) {
        if (parts.empty()) throw InputError("concat_rows: no inputs");
        const int cols = val(parts[0]).cols;
        int rows = 0;
        for (const NodeId p : parts) {
            if (val(p).cols != cols) throw InputError("concat_rows: column mismatch");
            rows += val(p).rows;
        }
        Tensor<S> out(rows, cols);
        std::size_t off = 0;
        for (const NodeId p : parts) {
            const auto& t = val(p);
            std::copy(t.data.begin(), t.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off));
            off += t.numel();
        }
        return push(Op::ConcatRows, std::move(out), parts);
    }

    NodeId slice_rows(NodeId x, int r0, int r1) {
        const auto& t = val(x);
        if (r0 < 0 || r1 > t.rows || r0 >= r1) throw InputError("slice_rows: bad range");
        Tensor<S> out(r1 - r0, t.cols);
        std::copy_n(t.data.data() + static_cast<std::size_t>(r0) * t.cols,
                    out.numel(), out.data.data());
        const NodeId id = push(Op::SliceRows, std::move(out), {x});
        nodes_[static_cast<std::size_t>(id)].aux = {r0, r1};
        return id;
    }

    // -log softmax(logits)[target] for a single-row logits tensor.
    NodeId cross_entropy(NodeId logits, int target) {
        const auto& t = val(logits);
        if (t.rows != 1) throw InputError("cross_entropy: logits must be a single row");
        if (target < 0 || target >= t.cols) throw InputError("cross_entropy: target out of range");
        S mx = t.data[0];
        for (int j = 1; j < t.cols; ++j) mx = std::max(mx, t.data[static_cast<std::size_t>(j)]);
        S sum = S(0);
        std::vector<S> probs(static_cast<std::size_t>(t.cols));
        for (int j = 0; j < t.cols; ++j) {
            probs[static_cast<std::size_t>(j)] = std::exp(t.data[static_cast<std::size_t>(j)] - mx);
            sum += probs[static_cast<std::size_t>(j)];
        }
        for (auto& p : probs) p /= sum;
        Tensor<S> out(1, 1);
        out.data[0] = -std::log(std::max(probs[static_cast<std::size_t>(target)],
                                         std::numeric_limits<S>::min()));
        const NodeId id = push(Op::CrossEntropy, std::move(out), {logits});
        nodes_[static_cast<std::size_t>(id)].saved = std::move(probs);
        nodes_[static_cast<std::size_t>(id)].aux = {target};
        return id;
    }

    // Mean over all elements of the squared difference.
    NodeId mse(NodeId a, NodeId b) {
        const auto& ta = val(a);
        const auto& tb = val(b);
        if (ta.rows != tb.rows || ta.cols != tb.cols) throw InputError("mse: shape mismatch");
        S acc = S(0);
        for (std::size_t i = 0; i < ta.data.size(); ++i) {
            const S d = ta.data[i] - tb.data[i];
            acc += d * d;
        }
        Tensor<S> out(1, 1);
        out.data[0] = acc / static_cast<S>(ta.numel());
        return push(Op::Mse, std::move(out), {a, b});
    }

    NodeId sum(NodeId x) {
        const auto& t = val(x);
        S acc = S(0);
        for (const S v : t.data) acc += v;
        Tensor<S> out(1, 1);
        out.data[0] = acc;
        return push(Op::Sum, std::move(out), {x});
    }

    const Tensor<S>& val(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }

    bool requires_grad(NodeId id) const {
        return nodes_[static_cast<std::size_t>(id)].requires_grad;
    }

    // Gradient of the last backward() target w.r.t. this node. Zero tensor if
    // the node was not reached.
    Tensor<S> grad(NodeId id) const {
        const auto& n = nodes_[static_cast<std::size_t>(id)];
        if (n.grad.empty()) return Tensor<S>(n.value.rows, n.value.cols);
        return Tensor<S>(n.value.rows, n.value.cols, n.grad);
    }

    // Reverse-mode sweep from a scalar loss. Repeated calls first clear all
    // gradient buffers, so results are reproducible.
    void backward(NodeId loss) {
        auto& ln = nodes_[static_cast<std::size_t>(loss)];
        if (ln.value.numel() != 1) throw InputError("backward: loss must be scalar");
        for (auto& n : nodes_) n.grad.clear();
        ensure_grad(loss);
        ln.grad[0] = S(1);
        for (int id = loss; id >= 0; --id) {
            auto& n = nodes_[static_cast<std::size_t>(id)];
            if (n.grad.empty() || !n.requires_grad) continue;
            propagate(static_cast<NodeId>(id));
        }
    }

    std::size_t num_nodes() const { return nodes_.size(); }

private:
    struct Node {
        Op op;
        Tensor<S> value;
        std::vector<S> grad;
        std::vector<NodeId> inputs;
        std::vector<int> aux;
        std::vector<S> saved;
        S scalar = S(0);
        bool requires_grad = false;
    };

    NodeId push(Op op, Tensor<S> value, std::vector<NodeId> inputs, bool leaf_grad = false) {
        Node n;
        n.op = op;
        n.value = std::move(value);
        n.inputs = std::move(inputs);
        n.requires_grad = leaf_grad;
        for (const NodeId i : n.inputs)
            n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(i)].requires_grad;
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    S* ensure_grad(NodeId id) {
        auto& n = nodes_[static_cast<std::size_t>(id)];
        if (n.grad.empty()) n.grad.assign(n.value.numel(), S(0));
        return n.grad.data();
    }

    void propagate(NodeId id) {
        auto& n = nodes_[static_cast<std::size_t>(id)];
        const S* g = n.grad.data();
        auto in = [&](std::size_t k) -> Node& {
            return nodes_[static_cast<std::size_t>(n.inputs[k])];
        };
        auto wants = [&](std::size_t k) { return in(k).requires_grad; };

        switch (n.op) {
            case Op::Constant:
            case Op::Leaf:
                break;
            case Op::Matmul: {
                const auto& a = in(0).value;
                const auto& b = in(1).value;
                if (wants(0))
                    detail::mm_nt(g, b.data.data(), ensure_grad(n.inputs[0]), a.rows, b.cols,
                                  a.cols, true);
                if (wants(1))
                    detail::mm_tn(a.data.data(), g, ensure_grad(n.inputs[1]), a.rows, a.cols,
                                  b.cols, true);
                break;
            }
            case Op::MatmulNT: {
                const auto& a = in(0).value;
                const auto& b = in(1).value;
                // c = a * b^T; dc/da = g * b, dc/db = g^T * a
                if (wants(0))
                    detail::mm_nn(g, b.data.data(), ensure_grad(n.inputs[0]), a.rows, b.rows,
                                  b.cols, true);
                if (wants(1))
                    detail::mm_tn(g, a.data.data(), ensure_grad(n.inputs[1]), a.rows, b.rows,
                                  a.cols, true);
                break;
            }
            case Op::Add:
                for (int k = 0; k < 2; ++k) {
                    if (!wants(static_cast<std::size_t>(k))) continue;
                    S* gi = ensure_grad(n.inputs[static_cast<std::size_t>(k)]);
                    for (std::size_t i = 0; i < n.value.numel(); ++i) gi[i] += g[i];
                }
                break;
            case Op::MulConst:
                if (wants(0)) {
                    S* gi = ensure_grad(n.inputs[0]);
                    for (std::size_t i = 0; i < n.value.numel(); ++i) gi[i] += g[i] * n.scalar;
                }
                break;
            case Op::GatherRows:
                if (wants(0)) {
                    S* gi = ensure_grad(n.inputs[0]);
                    const int cols = n.value.cols;
                    for (std::size_t r = 0; r < n.aux.size(); ++r) {
                        S* dst = gi + static_cast<std::size_t>(n.aux[r]) * cols;
                        const S* src = g + r * static_cast<std::size_t>(cols);
                        for (int j = 0; j < cols; ++j) dst[j] += src[j];
                    }
                }
                break;
            case Op::LayerNorm: {
                const auto& x = in(0).value;
                const auto& gamma = in(1).value;
                const int d = x.cols;
                for (int r = 0; r < x.rows; ++r) {
                    const S mean = n.saved[static_cast<std::size_t>(r) * 2];
                    const S rstd = n.saved[static_cast<std::size_t>(r) * 2 + 1];
                    const S* xr = x.data.data() + static_cast<std::size_t>(r) * d;
                    const S* gr = g + static_cast<std::size_t>(r) * d;
                    // dxhat_j = g_j * gamma_j; reduce the two LN means.
                    S sum_dxhat = S(0), sum_dxhat_xhat = S(0);
                    for (int j = 0; j < d; ++j) {
                        const S xhat = (xr[j] - mean) * rstd;
                        const S dxhat = gr[j] * gamma.data[static_cast<std::size_t>(j)];
                        sum_dxhat += dxhat;
                        sum_dxhat_xhat += dxhat * xhat;
                    }
                    if (wants(0)) {
                        S* gx = ensure_grad(n.inputs[0]) + static_cast<std::size_t>(r) * d;
                        for (int j = 0; j < d; ++j) {
                            const S xhat = (xr[j] - mean) * rstd;
                            const S dxhat = gr[j] * gamma.data[static_cast<std::size_t>(j)];
                            gx[j] += rstd * (dxhat - sum_dxhat / static_cast<S>(d) -
                                             xhat * sum_dxhat_xhat / static_cast<S>(d));
                        }
                    }
                    if (wants(1)) {
                        S* gg = ensure_grad(n.inputs[1]);
                        for (int j = 0; j < d; ++j)
                            gg[j] += gr[j] * (xr[j] - mean) * rstd;
                    }
                    if (wants(2)) {
                        S* gb = ensure_grad(n.inputs[2]);
                        for (int j = 0; j < d; ++j) gb[j] += gr[j];
                    }
                }
                break;
            }
            case Op::Softmax:
                if (wants(0)) {
                    S* gi = ensure_grad(n.inputs[0]);
                    const int d = n.value.cols;
                    for (int r = 0; r < n.value.rows; ++r) {
                        const S* y = n.value.data.data() + static_cast<std::size_t>(r) * d;
                        const S* gr = g + static_cast<std::size_t>(r) * d;
                        S dot = S(0);
                        for (int j = 0; j < d; ++j) dot += gr[j] * y[j];
                        S* gir = gi + static_cast<std::size_t>(r) * d;
                        for (int j = 0; j < d; ++j) gir[j] += y[j] * (gr[j] - dot);
                    }
                }
                break;
            case Op::Gelu:
                if (wants(0)) {
                    const auto& x = in(0).value;
                    S* gi = ensure_grad(n.inputs[0]);
                    for (std::size_t i = 0; i < x.data.size(); ++i) {
                        const S v = x.data[i];
                        const S cdf = S(0.5) * (S(1) + std::erf(v / std::numbers::sqrt2_v<S>));
                        const S pdf = std::exp(-v * v / S(2)) /
                                      std::sqrt(S(2) * std::numbers::pi_v<S>);
                        gi[i] += g[i] * (cdf + v * pdf);
                    }
                }
                break;
            case Op::Transpose:
                if (wants(0)) {
                    S* gi = ensure_grad(n.inputs[0]);
                    const auto& x = in(0).value;
                    for (int r = 0; r < x.rows; ++r)
                        for (int c = 0; c < x.cols; ++c)
                            gi[static_cast<std::size_t>(r) * x.cols + c] +=
                                g[static_cast<std::size_t>(c) * x.rows + r];
                }
                break;
            case Op::Reshape:
                if (wants(0)) {
                    S* gi = ensure_grad(n.inputs[0]);
                    for (std::size_t i = 0; i < n.value.numel(); ++i) gi[i] += g[i];
                }
                break;
            case Op::ConcatRows: {
                std::size_t off = 0;
                for (std::size_t k = 0; k < n.inputs.size(); ++k) {
                    const std::size_t sz = in(k).value.numel();
                    if (wants(k)) {
                        S* gi = ensure_grad(n.inputs[k]);
                        for (std::size_t i = 0; i < sz; ++i) gi[i] += g[off + i];
                    }
                    off += sz;
                }
                break;
            }
            case Op::SliceRows:
                if (wants(0)) {
                    S* gi = ensure_grad(n.inputs[0]);
                    const int cols = n.value.cols;
                    const std::size_t off = static_cast<std::size_t>(n.aux[0]) * cols;
                    for (std::size_t i = 0; i < n.value.numel(); ++i) gi[off + i] += g[i];
                }
                break;
            case Op::CrossEntropy:
                if (wants(0)) {
                    S* gi = ensure_grad(n.inputs[0]);
                    const int target = n.aux[0];
                    for (int j = 0; j < in(0).value.cols; ++j) {
                        S d = n.saved[static_cast<std::size_t>(j)];
                        if (j == target) d -= S(1);
                        gi[static_cast<std::size_t>(j)] += g[0] * d;
                    }
                }
                break;
            case Op::Mse: {
                const auto& a = in(0).value;
                const auto& b = in(1).value;
                const S scale = S(2) / static_cast<S>(a.numel());
                if (wants(0)) {
                    S* gi = ensure_grad(n.inputs[0]);
                    for (std::size_t i = 0; i < a.data.size(); ++i)
                        gi[i] += g[0] * scale * (a.data[i] - b.data[i]);
                }
                if (wants(1)) {
                    S* gi = ensure_grad(n.inputs[1]);
                    for (std::size_t i = 0; i < a.data.size(); ++i)
                        gi[i] -= g[0] * scale * (a.data[i] - b.data[i]);
                }
                break;
            }
            case Op::Sum:
                if (wants(0)) {
                    S* gi = ensure_grad(n.inputs[0]);
                    for (std::size_t i = 0; i < in(0).value.numel(); ++i) gi[i] += g[0];
                }
                break;
        }
    }

    std::vector<Node> nodes_;
};

using GraphF = Graph<float>;
using GraphD = Graph<double>;

}  // namespace navlab::diff
