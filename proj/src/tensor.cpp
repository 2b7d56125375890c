#include "freqflow/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

#include "freqflow/kernels.hpp"

namespace fq::diff {
namespace {

[[noreturn]] void fail(Op op, const std::string& msg) {
    throw std::invalid_argument(std::string(op_name(op)) + ": " + msg);
}

std::string shapes_str(const std::vector<Tensor>& ts) {
    std::string s;
    for (size_t i = 0; i < ts.size(); ++i) {
        if (i) s += " vs ";
        s += ts[i].shape_str();
    }
    return s;
}

void expect_same_shape(Op op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) fail(op, "shape mismatch (" + shapes_str({a, b}) + ")");
}

void expect_2d(Op op, const Tensor& t) {
    if (t.ndim() != 2) fail(op, "expected a 2-d tensor, got " + t.shape_str());
}

void expect_finite(Op op, const Tensor& t) {
    const double* p = t.data();
    const size_t n = t.numel();
    for (size_t i = 0; i < n; ++i) {
        if (!std::isfinite(p[i])) {
            fail(op, "non-finite value at flat index " + std::to_string(i));
        }
    }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

size_t Tensor::count(const std::vector<size_t>& s) {
    size_t n = 1;
    for (size_t d : s) n *= d;
    return n;
}

Tensor::Tensor(std::vector<size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)),
      data_(std::make_shared<std::vector<double>>(std::move(data))) {
    if (data_->size() != count(shape_)) {
        throw std::invalid_argument("Tensor: data size " + std::to_string(data_->size()) +
                                    " does not match shape " + shape_str());
    }
}

double Tensor::item() const {
    if (numel() != 1) {
        throw std::invalid_argument("Tensor::item: expected scalar, got " + shape_str());
    }
    return (*data_)[0];
}

std::string Tensor::shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape_[i]);
    }
    return s + "]";
}

const char* op_name(Op op) {
    switch (op) {
        case Op::leaf: return "leaf";
        case Op::constant: return "constant";
        case Op::add: return "add";
        case Op::sub: return "sub";
        case Op::mul: return "mul";
        case Op::scalar_mul: return "scalar_mul";
        case Op::matmul: return "matmul";
        case Op::affine: return "affine";
        case Op::tanh_fn: return "tanh";
        case Op::silu: return "silu";
        case Op::exp_fn: return "exp";
        case Op::square: return "square";
        case Op::sqrt_fn: return "sqrt";
        case Op::concat_last: return "concat_last";
        case Op::slice_last: return "slice_last";
        case Op::sum: return "sum";
        case Op::mean: return "mean";
        case Op::l2norm_rows: return "l2norm_rows";
        case Op::softmax_rows: return "softmax_rows";
        case Op::reshape: return "reshape";
        case Op::transpose2d: return "transpose2d";
    }
    return "?";
}

Tape::Tape() { nodes_.reserve(64); }

int Tape::record(Op op, std::vector<int> in, Tensor value, double a, double b,
                 std::vector<size_t> extents) {
    expect_finite(op, value);
    const int id = static_cast<int>(nodes_.size());
    bool rg = (op == Op::leaf);
    for (int i : in) rg = rg || nodes_[i].requires_grad;
    value.node_ = id;
    nodes_.push_back(Node{op, std::move(in), std::move(value), a, b,
                          std::move(extents), rg});
    return id;
}

Tensor Tape::leaf(const Tensor& value) {
    Tensor v = value;
    const int id = record(Op::leaf, {}, std::move(v), 0, 0, {});
    return nodes_[id].value;
}

Tensor Tape::constant(const Tensor& value) {
    Tensor v = value;
    const int id = record(Op::constant, {}, std::move(v), 0, 0, {});
    return nodes_[id].value;
}

Tensor Tape::detach(const Tensor& t) {
    Tensor out = t;
    out.node_ = -1;
    return out;
}

int Tape::input_id(const Tensor& t) {
    if (t.node_ >= 0) {
        if (static_cast<size_t>(t.node_) >= nodes_.size()) {
            throw std::invalid_argument("Tape: input tensor recorded on another tape");
        }
        return t.node_;
    }
    Tensor v = t;
    return record(Op::constant, {}, std::move(v), 0, 0, {});
}

Tensor Tape::apply(Op op, const std::vector<Tensor>& inputs, double attr_a,
                   double attr_b, std::vector<size_t> extents) {
    std::vector<int> in;
    in.reserve(inputs.size());
    for (const Tensor& t : inputs) in.push_back(input_id(t));
    Tensor value = exec(op, in, attr_a, attr_b, extents);
    const int id = record(op, std::move(in), std::move(value), attr_a, attr_b,
                          std::move(extents));
    return nodes_[id].value;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) { return apply(Op::add, {a, b}); }
Tensor Tape::sub(const Tensor& a, const Tensor& b) { return apply(Op::sub, {a, b}); }
Tensor Tape::mul(const Tensor& a, const Tensor& b) { return apply(Op::mul, {a, b}); }
Tensor Tape::scalar_mul(const Tensor& a, double c) { return apply(Op::scalar_mul, {a}, c); }
Tensor Tape::matmul(const Tensor& a, const Tensor& b) { return apply(Op::matmul, {a, b}); }
Tensor Tape::affine(const Tensor& x, const Tensor& w, const Tensor& b) {
    return apply(Op::affine, {x, w, b});
}
Tensor Tape::tanh(const Tensor& a) { return apply(Op::tanh_fn, {a}); }
Tensor Tape::silu(const Tensor& a) { return apply(Op::silu, {a}); }
Tensor Tape::exp(const Tensor& a) { return apply(Op::exp_fn, {a}); }
Tensor Tape::square(const Tensor& a) { return apply(Op::square, {a}); }
Tensor Tape::sqrt(const Tensor& a) { return apply(Op::sqrt_fn, {a}); }
Tensor Tape::concat_last(const std::vector<Tensor>& parts) { return apply(Op::concat_last, parts); }
Tensor Tape::slice_last(const Tensor& a, size_t start, size_t len) {
    return apply(Op::slice_last, {a}, static_cast<double>(start), static_cast<double>(len));
}
Tensor Tape::sum(const Tensor& a) { return apply(Op::sum, {a}); }
Tensor Tape::mean(const Tensor& a) { return apply(Op::mean, {a}); }
Tensor Tape::l2norm_rows(const Tensor& a) { return apply(Op::l2norm_rows, {a}); }
Tensor Tape::softmax_rows(const Tensor& a) { return apply(Op::softmax_rows, {a}); }
Tensor Tape::reshape(const Tensor& a, std::vector<size_t> shape) {
    return apply(Op::reshape, {a}, 0, 0, std::move(shape));
}
Tensor Tape::transpose2d(const Tensor& a) { return apply(Op::transpose2d, {a}); }

Tensor Tape::exec(Op op, const std::vector<int>& in, double a, double b,
                  const std::vector<size_t>& extents,
                  const std::vector<Tensor>* values) const {
    const auto& ops = kern::active();
    auto val = [&](size_t i) -> const Tensor& {
        return values ? (*values)[static_cast<size_t>(in[i])]
                      : nodes_[static_cast<size_t>(in[i])].value;
    };

    switch (op) {
        case Op::leaf:
        case Op::constant:
            fail(op, "not produced via apply()");

        case Op::add:
        case Op::sub:
        case Op::mul: {
            const Tensor& x = val(0);
            const Tensor& y = val(1);
            expect_same_shape(op, x, y);
            Tensor out(x.shape());
            const size_t n = x.numel();
            if (op == Op::add) ops.add(out.mutable_data(), x.data(), y.data(), n);
            else if (op == Op::sub) ops.sub(out.mutable_data(), x.data(), y.data(), n);
            else ops.mul(out.mutable_data(), x.data(), y.data(), n);
            return out;
        }

        case Op::scalar_mul: {
            const Tensor& x = val(0);
            if (!std::isfinite(a)) fail(op, "non-finite scalar");
            Tensor out(x.shape());
            ops.scale(out.mutable_data(), x.data(), a, x.numel());
            return out;
        }

        case Op::matmul: {
            const Tensor& x = val(0);
            const Tensor& y = val(1);
            expect_2d(op, x);
            expect_2d(op, y);
            if (x.dim(1) != y.dim(0)) {
                fail(op, "inner dimension mismatch (" + shapes_str({x, y}) + ")");
            }
            Tensor out({x.dim(0), y.dim(1)});
            ops.matmul(out.mutable_data(), x.data(), y.data(), x.dim(0), x.dim(1),
                       y.dim(1), false);
            return out;
        }

        case Op::affine: {
            const Tensor& x = val(0);
            const Tensor& w = val(1);
            const Tensor& bias = val(2);
            expect_2d(op, x);
            expect_2d(op, w);
            if (bias.ndim() != 1) fail(op, "bias must be 1-d, got " + bias.shape_str());
            if (x.dim(1) != w.dim(0) || w.dim(1) != bias.dim(0)) {
                fail(op, "shape mismatch (" + shapes_str({x, w, bias}) + ")");
            }
            const size_t rows = x.dim(0), cols = w.dim(1);
            Tensor out({rows, cols});
            ops.matmul(out.mutable_data(), x.data(), w.data(), rows, x.dim(1), cols,
                       false);
            double* o = out.mutable_data();
            for (size_t r = 0; r < rows; ++r) {
                ops.add(o + r * cols, o + r * cols, bias.data(), cols);
            }
            return out;
        }

        case Op::tanh_fn:
        case Op::silu:
        case Op::exp_fn:
        case Op::square:
        case Op::sqrt_fn: {
            const Tensor& x = val(0);
            Tensor out(x.shape());
            const double* p = x.data();
            double* o = out.mutable_data();
            const size_t n = x.numel();
            switch (op) {
                case Op::tanh_fn:
                    for (size_t i = 0; i < n; ++i) o[i] = std::tanh(p[i]);
                    break;
                case Op::silu:
                    for (size_t i = 0; i < n; ++i) o[i] = p[i] * sigmoid(p[i]);
                    break;
                case Op::exp_fn:
                    for (size_t i = 0; i < n; ++i) o[i] = std::exp(p[i]);
                    break;
                case Op::square:
                    for (size_t i = 0; i < n; ++i) o[i] = p[i] * p[i];
                    break;
                default:
                    for (size_t i = 0; i < n; ++i) {
                        if (p[i] < 0.0) fail(op, "negative input");
                        o[i] = std::sqrt(p[i]);
                    }
            }
            return out;
        }

        case Op::concat_last: {
            if (in.empty()) fail(op, "needs at least one input");
            const size_t rows = val(0).ndim() == 2 ? val(0).dim(0) : 1;
            size_t cols = 0;
            for (size_t i = 0; i < in.size(); ++i) {
                expect_2d(op, val(i));
                if (val(i).dim(0) != rows) {
                    fail(op, "row count mismatch (" + val(i).shape_str() + ")");
                }
                cols += val(i).dim(1);
            }
            Tensor out({rows, cols});
            double* o = out.mutable_data();
            size_t off = 0;
            for (size_t i = 0; i < in.size(); ++i) {
                const size_t c = val(i).dim(1);
                const double* p = val(i).data();
                for (size_t r = 0; r < rows; ++r) {
                    std::memcpy(o + r * cols + off, p + r * c, c * sizeof(double));
                }
                off += c;
            }
            return out;
        }

        case Op::slice_last: {
            const Tensor& x = val(0);
            expect_2d(op, x);
            const size_t start = static_cast<size_t>(a), len = static_cast<size_t>(b);
            if (len == 0 || start + len > x.dim(1)) {
                fail(op, "range [" + std::to_string(start) + ", " +
                             std::to_string(start + len) + ") out of bounds for " +
                             x.shape_str());
            }
            const size_t rows = x.dim(0), cols = x.dim(1);
            Tensor out({rows, len});
            double* o = out.mutable_data();
            for (size_t r = 0; r < rows; ++r) {
                std::memcpy(o + r * len, x.data() + r * cols + start, len * sizeof(double));
            }
            return out;
        }

        case Op::sum:
        case Op::mean: {
            const Tensor& x = val(0);
            const double* p = x.data();
            double s = 0.0;
            for (size_t i = 0; i < x.numel(); ++i) s += p[i];
            if (op == Op::mean) s /= static_cast<double>(x.numel());
            return Tensor::scalar(s);
        }

        case Op::l2norm_rows: {
            const Tensor& x = val(0);
            expect_2d(op, x);
            const size_t rows = x.dim(0), cols = x.dim(1);
            Tensor out({rows});
            double* o = out.mutable_data();
            for (size_t r = 0; r < rows; ++r) {
                const double* p = x.data() + r * cols;
                double s = 0.0;
                for (size_t c = 0; c < cols; ++c) s = std::fma(p[c], p[c], s);
                o[r] = std::sqrt(s);
            }
            return out;
        }

        case Op::softmax_rows: {
            const Tensor& x = val(0);
            expect_2d(op, x);
            const size_t rows = x.dim(0), cols = x.dim(1);
            Tensor out(x.shape());
            double* o = out.mutable_data();
            for (size_t r = 0; r < rows; ++r) {
                const double* p = x.data() + r * cols;
                double mx = p[0];
                for (size_t c = 1; c < cols; ++c) mx = std::max(mx, p[c]);
                double s = 0.0;
                for (size_t c = 0; c < cols; ++c) {
                    o[r * cols + c] = std::exp(p[c] - mx);
                    s += o[r * cols + c];
                }
                for (size_t c = 0; c < cols; ++c) o[r * cols + c] /= s;
            }
            return out;
        }

        case Op::reshape: {
            const Tensor& x = val(0);
            size_t n = 1;
            for (size_t d : extents) n *= d;
            if (n != x.numel()) {
                fail(op, "element count mismatch for " + x.shape_str());
            }
            Tensor out = x;  // shares storage; element order unchanged
            out.shape_ = extents;
            out.node_ = -1;
            return out;
        }

        case Op::transpose2d: {
            const Tensor& x = val(0);
            expect_2d(op, x);
            const size_t rows = x.dim(0), cols = x.dim(1);
            Tensor out({cols, rows});
            double* o = out.mutable_data();
            const double* p = x.data();
            for (size_t r = 0; r < rows; ++r)
                for (size_t c = 0; c < cols; ++c) o[c * rows + r] = p[r * cols + c];
            return out;
        }
    }
    fail(op, "unhandled primitive");
}

void Tape::backward(const Tensor& root) {
    if (root.node_ < 0 || static_cast<size_t>(root.node_) >= nodes_.size()) {
        throw std::invalid_argument("backward: root is detached or not recorded here");
    }
    if (root.numel() != 1) {
        throw std::invalid_argument("backward: root must be scalar, got " +
                                    root.shape_str());
    }
    if (!nodes_[root.node_].requires_grad) {
        throw std::invalid_argument("backward: root does not depend on any leaf");
    }

    grads_.assign(nodes_.size(), {});
    grads_[root.node_] = {1.0};

    for (int id = root.node_; id >= 0; --id) {
        const Node& node = nodes_[static_cast<size_t>(id)];
        if (grads_[static_cast<size_t>(id)].empty() || !node.requires_grad) continue;
        accumulate(id, node, grads_);
    }
    backward_done_ = true;
}

namespace {

std::vector<double>& grad_buf(std::vector<std::vector<double>>& grads, int id,
                              size_t numel) {
    auto& g = grads[static_cast<size_t>(id)];
    if (g.empty()) g.assign(numel, 0.0);
    return g;
}

}  // namespace

void Tape::accumulate(int node_id, const Node& node,
                      std::vector<std::vector<double>>& grads) const {
    const auto& ops = kern::active();
    const std::vector<double>& g = grads[static_cast<size_t>(node_id)];
    auto input = [&](size_t i) -> const Node& {
        return nodes_[static_cast<size_t>(node.in[i])];
    };
    auto wants = [&](size_t i) { return input(i).requires_grad; };
    auto buf = [&](size_t i) -> std::vector<double>& {
        return grad_buf(grads, node.in[i], input(i).value.numel());
    };

    switch (node.op) {
        case Op::leaf:
        case Op::constant:
            return;

        case Op::add:
            if (wants(0)) ops.axpy(buf(0).data(), g.data(), 1.0, g.size());
            if (wants(1)) ops.axpy(buf(1).data(), g.data(), 1.0, g.size());
            return;

        case Op::sub:
            if (wants(0)) ops.axpy(buf(0).data(), g.data(), 1.0, g.size());
            if (wants(1)) ops.axpy(buf(1).data(), g.data(), -1.0, g.size());
            return;

        case Op::mul: {
            if (wants(0)) {
                auto& b0 = buf(0);
                const double* other = input(1).value.data();
                for (size_t i = 0; i < g.size(); ++i)
                    b0[i] = std::fma(g[i], other[i], b0[i]);
            }
            if (wants(1)) {
                auto& b1 = buf(1);
                const double* other = input(0).value.data();
                for (size_t i = 0; i < g.size(); ++i)
                    b1[i] = std::fma(g[i], other[i], b1[i]);
            }
            return;
        }

        case Op::scalar_mul:
            if (wants(0)) ops.axpy(buf(0).data(), g.data(), node.a, g.size());
            return;

        case Op::matmul: {
            const Tensor& x = input(0).value;  // m x k
            const Tensor& y = input(1).value;  // k x n
            const size_t m = x.dim(0), k = x.dim(1), n = y.dim(1);
            if (wants(0)) {
                // dX += g * Y^T; materialise the transpose to keep the
                // j-vectorised accumulation order.
                std::vector<double> yt(k * n);
                const double* p = y.data();
                for (size_t r = 0; r < k; ++r)
                    for (size_t c = 0; c < n; ++c) yt[c * k + r] = p[r * n + c];
                ops.matmul(buf(0).data(), g.data(), yt.data(), m, n, k, true);
            }
            if (wants(1)) {
                ops.matmul_at_b(buf(1).data(), x.data(), g.data(), k, m, n, true);
            }
            return;
        }

        case Op::affine: {
            const Tensor& x = input(0).value;  // r x i
            const Tensor& w = input(1).value;  // i x o
            const size_t r = x.dim(0), i = x.dim(1), o = w.dim(1);
            if (wants(0)) {
                std::vector<double> wt(i * o);
                const double* p = w.data();
                for (size_t a = 0; a < i; ++a)
                    for (size_t b = 0; b < o; ++b) wt[b * i + a] = p[a * o + b];
                ops.matmul(buf(0).data(), g.data(), wt.data(), r, o, i, true);
            }
            if (wants(1)) {
                ops.matmul_at_b(buf(1).data(), x.data(), g.data(), i, r, o, true);
            }
            if (wants(2)) {
                auto& bb = buf(2);
                for (size_t row = 0; row < r; ++row)
                    ops.add(bb.data(), bb.data(), g.data() + row * o, o);
            }
            return;
        }

        case Op::tanh_fn: {
            if (!wants(0)) return;
            const double* y = node.value.data();
            auto& b0 = buf(0);
            for (size_t i = 0; i < g.size(); ++i)
                b0[i] += g[i] * (1.0 - y[i] * y[i]);
            return;
        }

        case Op::silu: {
            if (!wants(0)) return;
            const double* x = input(0).value.data();
            auto& b0 = buf(0);
            for (size_t i = 0; i < g.size(); ++i) {
                const double s = sigmoid(x[i]);
                b0[i] += g[i] * (s * (1.0 + x[i] * (1.0 - s)));
            }
            return;
        }

        case Op::exp_fn: {
            if (!wants(0)) return;
            const double* y = node.value.data();
            auto& b0 = buf(0);
            for (size_t i = 0; i < g.size(); ++i) b0[i] += g[i] * y[i];
            return;
        }

        case Op::square: {
            if (!wants(0)) return;
            const double* x = input(0).value.data();
            auto& b0 = buf(0);
            for (size_t i = 0; i < g.size(); ++i) b0[i] += 2.0 * g[i] * x[i];
            return;
        }

        case Op::sqrt_fn: {
            // Subgradient 0 at x == 0.
            if (!wants(0)) return;
            const double* y = node.value.data();
            auto& b0 = buf(0);
            for (size_t i = 0; i < g.size(); ++i)
                if (y[i] > 0.0) b0[i] += g[i] / (2.0 * y[i]);
            return;
        }

        case Op::concat_last: {
            const size_t rows = node.value.dim(0), cols = node.value.dim(1);
            size_t off = 0;
            for (size_t i = 0; i < node.in.size(); ++i) {
                const size_t c = input(i).value.dim(1);
                if (wants(i)) {
                    auto& bi = buf(i);
                    for (size_t r = 0; r < rows; ++r)
                        ops.add(bi.data() + r * c, bi.data() + r * c,
                                g.data() + r * cols + off, c);
                }
                off += c;
            }
            return;
        }

        case Op::slice_last: {
            if (!wants(0)) return;
            const size_t start = static_cast<size_t>(node.a);
            const size_t len = static_cast<size_t>(node.b);
            const size_t rows = input(0).value.dim(0), cols = input(0).value.dim(1);
            auto& b0 = buf(0);
            for (size_t r = 0; r < rows; ++r)
                ops.add(b0.data() + r * cols + start, b0.data() + r * cols + start,
                        g.data() + r * len, len);
            return;
        }

        case Op::sum: {
            if (!wants(0)) return;
            auto& b0 = buf(0);
            for (double& x : b0) x += g[0];
            return;
        }

        case Op::mean: {
            if (!wants(0)) return;
            auto& b0 = buf(0);
            const double s = g[0] / static_cast<double>(b0.size());
            for (double& x : b0) x += s;
            return;
        }

        case Op::l2norm_rows: {
            // d||x||/dx = x/||x||; subgradient 0 at the origin.
            if (!wants(0)) return;
            const Tensor& x = input(0).value;
            const size_t rows = x.dim(0), cols = x.dim(1);
            const double* y = node.value.data();
            auto& b0 = buf(0);
            for (size_t r = 0; r < rows; ++r) {
                if (y[r] <= 0.0) continue;
                const double s = g[r] / y[r];
                ops.axpy(b0.data() + r * cols, x.data() + r * cols, s, cols);
            }
            return;
        }

        case Op::softmax_rows: {
            if (!wants(0)) return;
            const size_t rows = node.value.dim(0), cols = node.value.dim(1);
            const double* y = node.value.data();
            auto& b0 = buf(0);
            for (size_t r = 0; r < rows; ++r) {
                const double* yr = y + r * cols;
                const double* gr = g.data() + r * cols;
                double dot = 0.0;
                for (size_t c = 0; c < cols; ++c) dot = std::fma(gr[c], yr[c], dot);
                for (size_t c = 0; c < cols; ++c)
                    b0[r * cols + c] += yr[c] * (gr[c] - dot);
            }
            return;
        }

        case Op::reshape:
            if (wants(0)) ops.axpy(buf(0).data(), g.data(), 1.0, g.size());
            return;

        case Op::transpose2d: {
            if (!wants(0)) return;
            const size_t rows = input(0).value.dim(0), cols = input(0).value.dim(1);
            auto& b0 = buf(0);
            for (size_t r = 0; r < rows; ++r)
                for (size_t c = 0; c < cols; ++c) b0[r * cols + c] += g[c * rows + r];
            return;
        }
    }
}

Tensor Tape::grad(const Tensor& of) const {
    if (!backward_done_) {
        throw std::runtime_error("grad: backward() has not been run");
    }
    if (of.node_ < 0 || static_cast<size_t>(of.node_) >= nodes_.size()) {
        throw std::invalid_argument("grad: tensor is detached or not recorded here");
    }
    const Node& node = nodes_[static_cast<size_t>(of.node_)];
    if (static_cast<size_t>(of.node_) >= grads_.size()) {
        return Tensor::zeros(node.value.shape());  // recorded after backward()
    }
    const auto& g = grads_[static_cast<size_t>(of.node_)];
    if (g.empty()) return Tensor::zeros(node.value.shape());
    return Tensor(node.value.shape(), g);
}

bool Tape::requires_grad(const Tensor& t) const {
    if (t.node_ < 0 || static_cast<size_t>(t.node_) >= nodes_.size()) return false;
    return nodes_[static_cast<size_t>(t.node_)].requires_grad;
}

bool Tape::replay_check() const {
    for (const Node& node : nodes_) {
        if (node.op == Op::leaf || node.op == Op::constant) continue;
        Tensor again = exec(node.op, node.in, node.a, node.b, node.extents);
        if (again.numel() != node.value.numel()) return false;
        if (std::memcmp(again.data(), node.value.data(),
                        again.numel() * sizeof(double)) != 0)
            return false;
    }
    return true;
}

double Tape::replay_scalar(const Tensor& leaf, const std::vector<double>& value,
                           const Tensor& root) const {
    if (leaf.node_ < 0 || static_cast<size_t>(leaf.node_) >= nodes_.size() ||
        nodes_[static_cast<size_t>(leaf.node_)].op != Op::leaf) {
        throw std::invalid_argument("replay_scalar: leaf is not recorded here");
    }
    if (root.node_ < 0 || static_cast<size_t>(root.node_) >= nodes_.size()) {
        throw std::invalid_argument("replay_scalar: root is not recorded here");
    }
    if (root.numel() != 1) {
        throw std::invalid_argument("replay_scalar: root must be scalar, got " +
                                    root.shape_str());
    }
    if (value.size() != leaf.numel()) {
        throw std::invalid_argument("replay_scalar: value size mismatch");
    }

    const size_t lid = static_cast<size_t>(leaf.node_);
    const size_t rid = static_cast<size_t>(root.node_);
    std::vector<Tensor> vals;
    vals.reserve(nodes_.size());
    for (const Node& node : nodes_) vals.push_back(node.value);
    vals[lid] = Tensor(leaf.shape(), value);
    for (size_t id = lid + 1; id <= rid && id < nodes_.size(); ++id) {
        const Node& node = nodes_[id];
        if (node.op == Op::leaf || node.op == Op::constant) continue;
        vals[id] = exec(node.op, node.in, node.a, node.b, node.extents, &vals);
    }
    return vals[rid].at(0);
}

double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                  const Tensor& x, double step) {
    if (!(step > 0.0)) {
        throw std::invalid_argument("grad_check: step must be positive");
    }
    Tape tape;
    Tensor xl = tape.leaf(x);
    Tensor y = f(tape, xl);
    if (y.numel() != 1) {
        throw std::invalid_argument("grad_check: f must return a scalar");
    }
    if (!tape.requires_grad(y)) {
        // f is constant in x (fully detached); analytic and numeric gradients
        // are both identically zero under stop-gradient semantics.
        return 0.0;
    }
    tape.backward(y);
    Tensor analytic = tape.grad(xl);

    double worst = 0.0;
    for (size_t i = 0; i < x.numel(); ++i) {
        auto eval = [&](double delta) {
            std::vector<double> d = x.vec();
            d[i] += delta;
            return tape.replay_scalar(xl, d, y);
        };
        const double numeric = (eval(step) - eval(-step)) / (2.0 * step);
        const double a = analytic.at(i);
        const double err = std::abs(a - numeric) /
                           std::max({std::abs(a), std::abs(numeric), 1e-8});
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace fq::diff
