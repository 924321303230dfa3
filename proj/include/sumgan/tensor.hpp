#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sumgan/errors.hpp"
#include "sumgan/rng.hpp"

namespace sumgan::ad {

using Shape = std::vector<std::size_t>;

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated on first use
    bool requires_grad = false;
    // true once some consumer propagated into grad during the current
    // backward pass; records whose output never becomes active are skipped
    bool grad_active = false;
};

using NodePtr = std::shared_ptr<Node>;

}  // namespace detail

/// Dense row-major tensor of 64-bit floats, rank 0..2 in practice. A Tensor
/// is a shared handle: copies alias the same storage, which is what ties
/// tape records to the values they differentiate.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(const Shape& shape);
    static Tensor full(const Shape& shape, double v);
    static Tensor scalar(double v);
    static Tensor from(const Shape& shape, std::vector<double> data);
    static Tensor uniform(const Shape& shape, Rng& rng, double lo, double hi);

    bool defined() const { return n_ != nullptr; }
    const Shape& shape() const { return n_->shape; }
    std::size_t rank() const { return n_->shape.size(); }
    std::size_t numel() const { return n_->value.size(); }
    std::size_t dim(std::size_t i) const { return n_->shape[i]; }
    std::size_t rows() const;  // rank-2 only
    std::size_t cols() const;

    std::span<const double> value() const { return n_->value; }
    std::vector<double>& raw_value() { return n_->value; }
    double item() const;

    bool requires_grad() const { return n_->requires_grad; }
    Tensor& set_requires_grad(bool b) {
        n_->requires_grad = b;
        return *this;
    }

    bool has_grad() const { return n_ && !n_->grad.empty(); }
    std::span<const double> grad() const { return n_->grad; }
    std::vector<double>& grad_buffer();
    void zero_grad();

    bool all_finite() const;
    bool same_storage(const Tensor& other) const { return n_ == other.n_; }

    const detail::NodePtr& handle() const { return n_; }
    explicit Tensor(detail::NodePtr n) : n_(std::move(n)) {}

private:
    detail::NodePtr n_;
};

struct NamedParam {
    std::string name;
    Tensor tensor;
};

/// Reverse-mode tape. Operations executed while a Graph is in scope are
/// recorded in execution order; backward() replays them once, in reverse.
/// A Graph and the tensors recorded on it belong to one thread.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    std::size_t size() const { return recs_.size(); }

    /// Populate grad buffers of every tensor the scalar loss depends on.
    /// Intermediate grads are recomputed per call; leaf grads accumulate.
    void backward(const Tensor& loss);

    static Graph* current();

    class Scope {
    public:
        explicit Scope(Graph& g);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        Graph* prev_;
    };

    void record(detail::NodePtr out, std::function<void()> bwd) {
        recs_.push_back({std::move(out), std::move(bwd)});
    }

private:
    struct Rec {
        detail::NodePtr out;
        std::function<void()> bwd;
    };
    std::vector<Rec> recs_;
};

// ---- elementwise (equal shapes, or one side a scalar tensor) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
/// Natural log; the input is clamped to >= 1e-12 first.
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor add_const(const Tensor& a, double c);
Tensor mul_const(const Tensor& a, double c);

// ---- reductions ----
Tensor sum(const Tensor& t);
Tensor sum(const Tensor& t, std::size_t axis);
Tensor mean(const Tensor& t);
Tensor mean(const Tensor& t, std::size_t axis);
/// Max; backward routes the gradient to the first maximal element
/// (lowest flat index on ties).
Tensor max(const Tensor& t);
Tensor max(const Tensor& t, std::size_t axis);

/// Numerically stabilized softmax along `axis`.
Tensor softmax(const Tensor& t, std::size_t axis);

// ---- linear algebra / structure ----
Tensor matmul(const Tensor& a, const Tensor& b);
/// matmul that reuses a caller-provided transpose of b for the backward
/// pass. b_t must hold transpose(b)'s value; it is read, never written.
/// Saves re-transposing loop-invariant weights inside recurrent steps.
Tensor matmul_pret(const Tensor& a, const Tensor& b, const Tensor& b_t);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, const Shape& shape);
Tensor narrow(const Tensor& a, std::size_t axis, std::size_t start, std::size_t len);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
/// y[t, :] = x[t, :] * s[t]
Tensor row_scale(const Tensor& x, const Tensor& s);
/// y[t, :] = x[t, :] + v
Tensor add_row_broadcast(const Tensor& x, const Tensor& v);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);
/// Fused LSTM cell math. pre is [1 x 4H] with gate order (input, forget,
/// candidate, output); returns [h | c] as [1 x 2H].
Tensor lstm_gates(const Tensor& pre, const Tensor& c_prev);

/// Copy a tensor's value into a fresh leaf that does not require grad.
Tensor detach(const Tensor& t);

/// Throws NumericError when the tensor contains NaN or Inf.
void check_finite(const Tensor& t, const std::string& what);

/// Negative-control hook: while enabled, sigmoid's backward rule is scaled
/// by a wrong constant. The gradient-check harness uses it to prove it can
/// catch a corrupted rule; never enabled in production paths.
void set_backward_fault_injection(bool enabled);
bool backward_fault_injection();

}  // namespace sumgan::ad
