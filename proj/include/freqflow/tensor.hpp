#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

// Dense row-major f64 tensors plus a define-by-run recording tape.
//
// A Tensor is an immutable value: shape, shared storage, and the id of the
// tape node that produced it (-1 for plain values and detached tensors).
// Once a buffer has been handed to a Tape or shared it must not be mutated;
// all operations allocate fresh buffers.
//
// A Tape is single-writer: one thread builds nodes and runs backward. Many
// tapes may run concurrently on different threads.

namespace fq::diff {

class Tape;

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<size_t> shape)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<double>>(count(shape_), 0.0)) {}
    Tensor(std::vector<size_t> shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor zeros(std::vector<size_t> shape) { return Tensor(std::move(shape)); }

    const std::vector<size_t>& shape() const { return shape_; }
    size_t ndim() const { return shape_.size(); }
    size_t dim(size_t i) const { return shape_[i]; }
    size_t numel() const { return data_ ? data_->size() : 0; }

    const double* data() const { return data_->data(); }
    const std::vector<double>& vec() const { return *data_; }
    // Only valid while this tensor is still being filled in, before it is
    // recorded on a tape or shared.
    double* mutable_data() { return data_->data(); }

    double at(size_t flat) const { return (*data_)[flat]; }
    double at(size_t i, size_t j) const { return (*data_)[i * shape_[1] + j]; }
    double item() const;  // numel()==1

    int node() const { return node_; }
    bool recorded() const { return node_ >= 0; }

    std::string shape_str() const;

private:
    static size_t count(const std::vector<size_t>& s);
    std::vector<size_t> shape_;
    std::shared_ptr<std::vector<double>> data_;
    int node_ = -1;
    friend class Tape;
};

// Primitive kinds recorded on the tape. Each has an exact forward rule and a
// hand-derived adjoint (see tensor.cpp).
enum class Op {
    leaf,          // differentiable input
    constant,      // non-differentiable input
    add,           // elementwise a + b
    sub,           // elementwise a - b
    mul,           // elementwise a * b
    scalar_mul,    // c * a, c a plain double
    matmul,        // (m x k) * (k x n)
    affine,        // x * w + b, bias broadcast over rows
    tanh_fn,       // elementwise tanh
    silu,          // x * sigmoid(x)
    exp_fn,        // elementwise exp
    square,        // x^2
    sqrt_fn,       // elementwise sqrt
    concat_last,   // concatenate 2-d tensors along the last axis
    slice_last,    // column range [start, start+len) of a 2-d tensor
    sum,           // full sum -> scalar
    mean,          // full mean -> scalar
    l2norm_rows,   // per-row l2 norm of a 2-d tensor -> vector
    softmax_rows,  // per-row softmax of a 2-d tensor
    reshape,       // metadata change, same element order
    transpose2d,   // 2-d transpose
};

const char* op_name(Op op);

class Tape {
public:
    Tape();

    // Inputs. leaf() participates in backward; constant() never does.
    Tensor leaf(const Tensor& value);
    Tensor constant(const Tensor& value);
    static Tensor detach(const Tensor& t);

    Tensor add(const Tensor& a, const Tensor& b);
    Tensor sub(const Tensor& a, const Tensor& b);
    Tensor mul(const Tensor& a, const Tensor& b);
    Tensor scalar_mul(const Tensor& a, double c);
    Tensor matmul(const Tensor& a, const Tensor& b);
    Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);
    Tensor tanh(const Tensor& a);
    Tensor silu(const Tensor& a);
    Tensor exp(const Tensor& a);
    Tensor square(const Tensor& a);
    Tensor sqrt(const Tensor& a);
    Tensor concat_last(const std::vector<Tensor>& parts);
    Tensor slice_last(const Tensor& a, size_t start, size_t len);
    Tensor sum(const Tensor& a);
    Tensor mean(const Tensor& a);
    Tensor l2norm_rows(const Tensor& a);
    Tensor softmax_rows(const Tensor& a);
    Tensor reshape(const Tensor& a, std::vector<size_t> shape);
    Tensor transpose2d(const Tensor& a);

    // Generic entry point; the typed methods all route through here.
    Tensor apply(Op op, const std::vector<Tensor>& inputs, double attr_a = 0.0,
                 double attr_b = 0.0, std::vector<size_t> extents = {});

    // Reverse sweep from a recorded scalar root. May be called repeatedly;
    // each call recomputes gradients from scratch (bit-identical results).
    void backward(const Tensor& root);

    // Gradient of a recorded tensor after backward(); zeros if the node is
    // not reached (constants included, by the detach semantics).
    Tensor grad(const Tensor& of) const;

    size_t node_count() const { return nodes_.size(); }

    // Whether gradients flow to `t` (recorded here and reachable from a leaf).
    bool requires_grad(const Tensor& t) const;

    // Re-executes every recorded node from its input values and verifies the
    // stored forward values are reproduced bit-for-bit.
    bool replay_check() const;

    // Re-executes the recorded graph with `leaf`'s buffer replaced by `value`
    // and returns the recomputed scalar `root`. Constants — detached snapshots
    // included — keep their recorded values, so the result reflects
    // stop-gradient semantics under perturbation. The tape is not modified.
    double replay_scalar(const Tensor& leaf, const std::vector<double>& value,
                         const Tensor& root) const;

private:
    struct Node {
        Op op;
        std::vector<int> in;
        Tensor value;
        double a = 0.0, b = 0.0;
        std::vector<size_t> extents;
        bool requires_grad = false;
    };

    int record(Op op, std::vector<int> in, Tensor value, double a, double b,
               std::vector<size_t> extents);
    int input_id(const Tensor& t);
    Tensor exec(Op op, const std::vector<int>& in, double a, double b,
                const std::vector<size_t>& extents,
                const std::vector<Tensor>* values = nullptr) const;
    void accumulate(int node_id, const Node& node,
                    std::vector<std::vector<double>>& grads) const;

    std::vector<Node> nodes_;
    std::vector<std::vector<double>> grads_;
    bool backward_done_ = false;
};

// Max relative gradient error of a scalar-valued function at x, comparing the
// tape's analytic gradient against central finite differences with the given
// step. Relative error per element: |a - n| / max(|a|, |n|, 1e-8).
// The numeric side perturbs the recorded graph via replay_scalar, so detached
// snapshots stay frozen — both sides measure the same stop-gradient function.
double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                  const Tensor& x, double step = 1e-5);

}  // namespace fq::diff
