#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "bnn/math.hpp"
#include "bnn/tensor.hpp"

namespace bnn {

enum class Activation { identity, relu, sigmoid, softplus, softmax_rows };

inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
        case Activation::softplus: return "softplus";
        case Activation::softmax_rows: return "softmax-rows";
    }
    throw std::invalid_argument("activation: unknown kind");
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "identity") return Activation::identity;
    if (s == "relu") return Activation::relu;
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "softplus") return Activation::softplus;
    if (s == "softmax-rows" || s == "softmax") return Activation::softmax_rows;
    throw std::invalid_argument("activation: unknown kind '" + s + "'");
}

namespace detail {

// C = A[m x k] * B[k x n]
inline Tensor matmul_plain(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor c({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a(i, p);
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) c(i, j) += av * b(p, j);
        }
    return c;
}

// C = A[m x k] * B[n x k]^T
inline Tensor matmul_nt_plain(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    Tensor c({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a(i, p) * b(j, p);
            c(i, j) = s;
        }
    return c;
}

// C = A[m x k]^T * B[m x n]
inline Tensor matmul_tn_plain(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor c({k, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a(i, p);
            for (std::size_t j = 0; j < n; ++j) c(p, j) += av * b(i, j);
        }
    return c;
}

}  // namespace detail

/// Handle to a node on a Tape.
struct Value {
    std::uint32_t id = UINT32_MAX;
};

using GradientMap = std::unordered_map<std::uint32_t, Tensor>;

/// Reverse-mode tape over dense tensors. Forward values are computed eagerly
/// as nodes are recorded; the tape is append-only during the forward pass and
/// backward() traverses it in strict reverse insertion order, so every node's
/// gradient has been fully accumulated from its consumers before its own
/// backward rule fires. A tape is single-owner and single-threaded; distinct
/// tapes share nothing.
class Tape {
public:
    /// Parameter node: appears in the gradient map returned by backward().
    Value leaf(Tensor t) { return push(Op::leaf, std::move(t)); }

    /// Data node: gradients are not propagated into it.
    Value constant(Tensor t) { return push(Op::constant, std::move(t)); }

    Value matmul(Value a, Value b) {
        const Tensor& ta = val(a);
        const Tensor& tb = val(b);
        if (ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows())
            throw std::invalid_argument("matmul: incompatible shapes " + ta.shape_string() +
                                        " and " + tb.shape_string());
        return push(Op::matmul, detail::matmul_plain(ta, tb), a, b);
    }

    /// a * b^T, the natural product for [batch x in] inputs against
    /// [out x in] weight matrices.
    Value matmul_nt(Value a, Value b) {
        const Tensor& ta = val(a);
        const Tensor& tb = val(b);
        if (ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.cols())
            throw std::invalid_argument("matmul_nt: incompatible shapes " + ta.shape_string() +
                                        " and " + tb.shape_string());
        return push(Op::matmul_nt, detail::matmul_nt_plain(ta, tb), a, b);
    }

    Value add(Value a, Value b) { return elementwise_binary(Op::add, a, b); }
    Value sub(Value a, Value b) { return elementwise_binary(Op::sub, a, b); }
    Value mul(Value a, Value b) { return elementwise_binary(Op::mul, a, b); }
    Value div(Value a, Value b) { return elementwise_binary(Op::div, a, b); }

    /// m[i,j] + bias[j]; the only broadcasting this engine supports.
    Value add_bias(Value m, Value bias) {
        const Tensor& tm = val(m);
        const Tensor& tb = val(bias);
        if (tm.rank() != 2 || tb.rank() != 1 || tm.cols() != tb.size())
            throw std::invalid_argument("add_bias: incompatible shapes " + tm.shape_string() +
                                        " and " + tb.shape_string());
        Tensor out = tm;
        for (std::size_t i = 0; i < tm.rows(); ++i)
            for (std::size_t j = 0; j < tm.cols(); ++j) out(i, j) += tb[j];
        return push(Op::add_bias, std::move(out), m, bias);
    }

    Value scale(Value a, double c) {
        Tensor out = val(a);
        for (double& x : out.data()) x *= c;
        Value v = push(Op::scale, std::move(out), a);
        node(v).c = c;
        return v;
    }

    Value add_scalar(Value a, double c) {
        Tensor out = val(a);
        for (double& x : out.data()) x += c;
        Value v = push(Op::add_scalar, std::move(out), a);
        node(v).c = c;
        return v;
    }

    Value neg(Value a) { return scale(a, -1.0); }

    Value relu(Value a) {
        Tensor out = val(a);
        for (double& x : out.data()) x = x > 0.0 ? x : 0.0;
        return push(Op::relu, std::move(out), a);
    }

    Value sigmoid_op(Value a) {
        Tensor out = val(a);
        for (double& x : out.data()) x = sigmoid(x);
        return push(Op::sigmoid, std::move(out), a);
    }

    Value softplus_op(Value a) {
        Tensor out = val(a);
        for (double& x : out.data()) x = softplus(x);
        return push(Op::softplus, std::move(out), a);
    }

    Value log_op(Value a) {
        Tensor out = val(a);
        for (double& x : out.data()) x = std::log(x);
        return push(Op::log, std::move(out), a);
    }

    Value clamp_min(Value a, double floor) {
        Tensor out = val(a);
        for (double& x : out.data()) x = x < floor ? floor : x;
        Value v = push(Op::clamp_min, std::move(out), a);
        node(v).c = floor;
        return v;
    }

    Value softmax_rows(Value a) {
        const Tensor& ta = val(a);
        if (ta.rank() != 2)
            throw std::invalid_argument("softmax_rows: expected rank-2 input, got " +
                                        ta.shape_string());
        Tensor out = ta;
        for (std::size_t i = 0; i < ta.rows(); ++i) {
            double mx = out(i, 0);
            for (std::size_t j = 1; j < ta.cols(); ++j) mx = std::max(mx, out(i, j));
            double z = 0.0;
            for (std::size_t j = 0; j < ta.cols(); ++j) {
                out(i, j) = std::exp(out(i, j) - mx);
                z += out(i, j);
            }
            for (std::size_t j = 0; j < ta.cols(); ++j) out(i, j) /= z;
        }
        return push(Op::softmax_rows, std::move(out), a);
    }

    Value activation(Value x, Activation kind) {
        switch (kind) {
            case Activation::identity: return x;
            case Activation::relu: return relu(x);
            case Activation::sigmoid: return sigmoid_op(x);
            case Activation::softplus: return softplus_op(x);
            case Activation::softmax_rows: return softmax_rows(x);
        }
        throw std::invalid_argument("activation: unknown kind");
    }

    Value sum(Value a) {
        double s = 0.0;
        for (double x : val(a).data()) s += x;
        return push(Op::sum, Tensor::scalar(s), a);
    }

    Value mean(Value a) {
        double s = 0.0;
        for (double x : val(a).data()) s += x;
        return push(Op::mean, Tensor::scalar(s / static_cast<double>(val(a).size())), a);
    }

    /// Column j of a rank-2 tensor, as a rank-1 tensor.
    Value slice_col(Value a, std::size_t j) {
        const Tensor& ta = val(a);
        if (ta.rank() != 2 || j >= ta.cols())
            throw std::invalid_argument("slice_col: column " + std::to_string(j) +
                                        " out of range for " + ta.shape_string());
        Tensor out({ta.rows()});
        for (std::size_t i = 0; i < ta.rows(); ++i) out[i] = ta(i, j);
        Value v = push(Op::slice_col, std::move(out), a);
        node(v).index = j;
        return v;
    }

    /// out[i] = a[i, labels[i]].
    Value gather_rows(Value a, std::vector<std::size_t> labels) {
        const Tensor& ta = val(a);
        if (ta.rank() != 2 || labels.size() != ta.rows())
            throw std::invalid_argument("gather_rows: need one label per row of " +
                                        ta.shape_string());
        for (std::size_t lab : labels)
            if (lab >= ta.cols())
                throw std::out_of_range("gather_rows: label " + std::to_string(lab) +
                                        " >= " + std::to_string(ta.cols()) + " classes");
        Tensor out({ta.rows()});
        for (std::size_t i = 0; i < ta.rows(); ++i) out[i] = ta(i, labels[i]);
        Value v = push(Op::gather_rows, std::move(out), a);
        node(v).indices = std::move(labels);
        return v;
    }

    Value reshape(Value a, std::vector<std::size_t> shape) {
        return push(Op::reshape, val(a).reshaped(std::move(shape)), a);
    }

    const Tensor& value(Value v) const { return nodes_.at(v.id).value; }
    std::size_t size() const { return nodes_.size(); }

    /// Accumulates dLoss/d(leaf) for every leaf reachable from `loss` and
    /// returns them keyed by leaf id. The tape is cleared afterwards.
    GradientMap backward(Value loss) {
        if (loss.id >= nodes_.size())
            throw std::logic_error("backward: loss is not a node on this tape");
        if (nodes_[loss.id].value.size() != 1)
            throw std::logic_error("backward: loss must be scalar, got shape " +
                                   nodes_[loss.id].value.shape_string());

        grad_of(loss.id) = Tensor::full(nodes_[loss.id].value.shape(), 1.0);

        for (std::uint32_t id = loss.id + 1; id-- > 0;) {
            Node& nd = nodes_[id];
            if (nd.grad.size() == 0) continue;  // not reachable from loss
            step_backward(nd);
        }

        GradientMap grads;
        for (std::uint32_t id = 0; id < nodes_.size(); ++id)
            if (nodes_[id].op == Op::leaf && nodes_[id].grad.size() != 0)
                grads.emplace(id, std::move(nodes_[id].grad));
        nodes_.clear();
        return grads;
    }

    void clear() { nodes_.clear(); }

private:
    enum class Op {
        leaf, constant, matmul, matmul_nt, add, sub, mul, div, add_bias,
        scale, add_scalar, relu, sigmoid, softplus, log, clamp_min,
        softmax_rows, sum, mean, slice_col, gather_rows, reshape
    };

    struct Node {
        Op op;
        std::uint32_t in0 = UINT32_MAX;
        std::uint32_t in1 = UINT32_MAX;
        Tensor value;
        Tensor grad;
        double c = 0.0;
        std::size_t index = 0;
        std::vector<std::size_t> indices;
    };

    Value push(Op op, Tensor value, Value in0 = {}, Value in1 = {}) {
        Node nd;
        nd.op = op;
        nd.in0 = in0.id;
        nd.in1 = in1.id;
        nd.value = std::move(value);
        nodes_.push_back(std::move(nd));
        return Value{static_cast<std::uint32_t>(nodes_.size() - 1)};
    }

    Node& node(Value v) { return nodes_[v.id]; }

    const Tensor& val(Value v) const {
        if (v.id >= nodes_.size()) throw std::logic_error("tape: dangling value handle");
        return nodes_[v.id].value;
    }

    Value elementwise_binary(Op op, Value a, Value b) {
        const Tensor& ta = val(a);
        const Tensor& tb = val(b);
        if (!ta.same_shape(tb))
            throw std::invalid_argument(std::string(op_name(op)) + ": shape mismatch " +
                                        ta.shape_string() + " vs " + tb.shape_string());
        Tensor out = ta;
        const auto& bd = tb.data();
        auto& od = out.data();
        switch (op) {
            case Op::add: for (std::size_t i = 0; i < od.size(); ++i) od[i] += bd[i]; break;
            case Op::sub: for (std::size_t i = 0; i < od.size(); ++i) od[i] -= bd[i]; break;
            case Op::mul: for (std::size_t i = 0; i < od.size(); ++i) od[i] *= bd[i]; break;
            case Op::div: for (std::size_t i = 0; i < od.size(); ++i) od[i] /= bd[i]; break;
            default: throw std::logic_error("elementwise_binary: bad op");
        }
        return push(op, std::move(out), a, b);
    }

    static const char* op_name(Op op) {
        switch (op) {
            case Op::add: return "add";
            case Op::sub: return "sub";
            case Op::mul: return "mul";
            case Op::div: return "div";
            default: return "op";
        }
    }

    /// Gradient buffer of node `id`, zero-initialized on first touch.
    Tensor& grad_of(std::uint32_t id) {
        Node& nd = nodes_[id];
        if (nd.grad.size() == 0) nd.grad = Tensor::zeros(nd.value.shape());
        return nd.grad;
    }

    bool wants_grad(std::uint32_t id) const {
        return id != UINT32_MAX && nodes_[id].op != Op::constant;
    }

    void accumulate(std::uint32_t id, const Tensor& g, double factor = 1.0) {
        if (!wants_grad(id)) return;
        Tensor& dst = grad_of(id);
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * g[i];
    }

    void step_backward(Node& nd) {
        const Tensor& g = nd.grad;
        switch (nd.op) {
            case Op::leaf:
            case Op::constant:
                break;
            case Op::matmul:
                if (wants_grad(nd.in0))
                    accumulate(nd.in0, detail::matmul_nt_plain(g, nodes_[nd.in1].value));
                if (wants_grad(nd.in1))
                    accumulate(nd.in1, detail::matmul_tn_plain(nodes_[nd.in0].value, g));
                break;
            case Op::matmul_nt:
                if (wants_grad(nd.in0))
                    accumulate(nd.in0, detail::matmul_plain(g, nodes_[nd.in1].value));
                if (wants_grad(nd.in1))
                    accumulate(nd.in1, detail::matmul_tn_plain(g, nodes_[nd.in0].value));
                break;
            case Op::add:
                accumulate(nd.in0, g);
                accumulate(nd.in1, g);
                break;
            case Op::sub:
                accumulate(nd.in0, g);
                accumulate(nd.in1, g, -1.0);
                break;
            case Op::mul:
                if (wants_grad(nd.in0)) mul_accumulate(nd.in0, g, nodes_[nd.in1].value);
                if (wants_grad(nd.in1)) mul_accumulate(nd.in1, g, nodes_[nd.in0].value);
                break;
            case Op::div: {
                const Tensor& b = nodes_[nd.in1].value;
                if (wants_grad(nd.in0)) {
                    Tensor& dst = grad_of(nd.in0);
                    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] / b[i];
                }
                if (wants_grad(nd.in1)) {
                    Tensor& dst = grad_of(nd.in1);
                    for (std::size_t i = 0; i < dst.size(); ++i)
                        dst[i] -= g[i] * nd.value[i] / b[i];
                }
                break;
            }
            case Op::add_bias: {
                accumulate(nd.in0, g);
                if (wants_grad(nd.in1)) {
                    Tensor& dst = grad_of(nd.in1);
                    const std::size_t rows = nd.value.rows(), cols = nd.value.cols();
                    for (std::size_t i = 0; i < rows; ++i)
                        for (std::size_t j = 0; j < cols; ++j) dst[j] += g(i, j);
                }
                break;
            }
            case Op::scale:
                accumulate(nd.in0, g, nd.c);
                break;
            case Op::add_scalar:
            case Op::reshape:
                if (wants_grad(nd.in0)) {
                    Tensor& dst = grad_of(nd.in0);
                    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
                }
                break;
            case Op::relu: {
                const Tensor& x = nodes_[nd.in0].value;
                if (wants_grad(nd.in0)) {
                    Tensor& dst = grad_of(nd.in0);
                    for (std::size_t i = 0; i < dst.size(); ++i)
                        if (x[i] > 0.0) dst[i] += g[i];
                }
                break;
            }
            case Op::sigmoid:
                if (wants_grad(nd.in0)) {
                    Tensor& dst = grad_of(nd.in0);
                    for (std::size_t i = 0; i < dst.size(); ++i)
                        dst[i] += g[i] * nd.value[i] * (1.0 - nd.value[i]);
                }
                break;
            case Op::softplus: {
                const Tensor& x = nodes_[nd.in0].value;
                if (wants_grad(nd.in0)) {
                    Tensor& dst = grad_of(nd.in0);
                    for (std::size_t i = 0; i < dst.size(); ++i)
                        dst[i] += g[i] * sigmoid(x[i]);
                }
                break;
            }
            case Op::log: {
                const Tensor& x = nodes_[nd.in0].value;
                if (wants_grad(nd.in0)) {
                    Tensor& dst = grad_of(nd.in0);
                    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] / x[i];
                }
                break;
            }
            case Op::clamp_min: {
                const Tensor& x = nodes_[nd.in0].value;
                if (wants_grad(nd.in0)) {
                    Tensor& dst = grad_of(nd.in0);
                    for (std::size_t i = 0; i < dst.size(); ++i)
                        if (x[i] >= nd.c) dst[i] += g[i];
                }
                break;
            }
            case Op::softmax_rows:
                // Jacobian-vector product per row; the Jacobian itself is
                // never materialized.
                if (wants_grad(nd.in0)) {
                    Tensor& dst = grad_of(nd.in0);
                    const std::size_t rows = nd.value.rows(), cols = nd.value.cols();
                    for (std::size_t i = 0; i < rows; ++i) {
                        double dot = 0.0;
                        for (std::size_t j = 0; j < cols; ++j) dot += g(i, j) * nd.value(i, j);
                        for (std::size_t j = 0; j < cols; ++j)
                            dst[i * cols + j] += nd.value(i, j) * (g(i, j) - dot);
                    }
                }
                break;
            case Op::sum:
                if (wants_grad(nd.in0)) {
                    Tensor& dst = grad_of(nd.in0);
                    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[0];
                }
                break;
            case Op::mean:
                if (wants_grad(nd.in0)) {
                    Tensor& dst = grad_of(nd.in0);
                    const double f = g[0] / static_cast<double>(dst.size());
                    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += f;
                }
                break;
            case Op::slice_col:
                if (wants_grad(nd.in0)) {
                    Tensor& dst = grad_of(nd.in0);
                    const std::size_t cols = nodes_[nd.in0].value.cols();
                    for (std::size_t i = 0; i < g.size(); ++i)
                        dst[i * cols + nd.index] += g[i];
                }
                break;
            case Op::gather_rows:
                if (wants_grad(nd.in0)) {
                    Tensor& dst = grad_of(nd.in0);
                    const std::size_t cols = nodes_[nd.in0].value.cols();
                    for (std::size_t i = 0; i < g.size(); ++i)
                        dst[i * cols + nd.indices[i]] += g[i];
                }
                break;
        }
    }

    void mul_accumulate(std::uint32_t id, const Tensor& g, const Tensor& other) {
        Tensor& dst = grad_of(id);
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * other[i];
    }

    std::vector<Node> nodes_;
};

}  // namespace bnn
