#include "sumgan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <initializer_list>
#include <numeric>

#include "sumgan/kernels.hpp"

namespace sumgan::ad {

namespace {

using detail::Node;
using detail::NodePtr;

constexpr double kLogClamp = 1e-12;

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

NodePtr make_node(Shape shape) {
    auto n = std::make_shared<Node>();
    n->value.assign(shape_numel(shape), 0.0);
    n->shape = std::move(shape);
    return n;
}

double* ensure_grad(Node& n) {
    if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
    n.grad_active = true;
    return n.grad.data();
}

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

/// Graph to record on, or nullptr when not tracing these inputs.
Graph* recording(std::initializer_list<const Tensor*> ins) {
    Graph* g = Graph::current();
    if (g == nullptr) return nullptr;
    for (const Tensor* t : ins) {
        if (t->defined() && t->requires_grad()) return g;
    }
    return nullptr;
}

Tensor finish(NodePtr out, Graph* g, std::function<void()> bwd) {
    if (g != nullptr) {
        out->requires_grad = true;
        g->record(out, std::move(bwd));
    }
    return Tensor(std::move(out));
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw DimError(std::string(op) + ": expected rank-2 tensor, got " +
                       shape_str(t.shape()));
    }
}

}  // namespace

thread_local Graph* g_current_graph = nullptr;

Graph* Graph::current() { return g_current_graph; }

Graph::Scope::Scope(Graph& g) : prev_(g_current_graph) { g_current_graph = &g; }
Graph::Scope::~Scope() { g_current_graph = prev_; }

void Graph::backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ContractError("backward: loss must be a defined scalar tensor");
    }
    // Intermediate grads are scratch: reset them so each backward pass
    // contributes exactly one gradient into the leaves.
    for (auto& r : recs_) {
        r.out->grad.assign(r.out->value.size(), 0.0);
        r.out->grad_active = false;
    }
    Node* ln = loss.handle().get();
    ensure_grad(*ln);
    ln->grad[0] += 1.0;
    for (auto it = recs_.rbegin(); it != recs_.rend(); ++it) {
        if (!it->out->grad_active) continue;  // nothing flowed into this node
        it->bwd();
    }
}

// ---- Tensor basics ----

Tensor Tensor::zeros(const Shape& shape) { return Tensor(make_node(shape)); }

Tensor Tensor::full(const Shape& shape, double v) {
    auto n = make_node(shape);
    std::fill(n->value.begin(), n->value.end(), v);
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v) { return full({1}, v); }

Tensor Tensor::from(const Shape& shape, std::vector<double> data) {
    if (shape_numel(shape) != data.size()) {
        throw DimError("Tensor::from: shape " + shape_str(shape) + " wants " +
                       std::to_string(shape_numel(shape)) + " values, got " +
                       std::to_string(data.size()));
    }
    auto n = std::make_shared<Node>();
    n->shape = shape;
    n->value = std::move(data);
    return Tensor(std::move(n));
}

Tensor Tensor::uniform(const Shape& shape, Rng& rng, double lo, double hi) {
    auto n = make_node(shape);
    for (auto& x : n->value) x = rng.uniform(lo, hi);
    return Tensor(std::move(n));
}

std::size_t Tensor::rows() const {
    require_rank2(*this, "rows");
    return n_->shape[0];
}

std::size_t Tensor::cols() const {
    require_rank2(*this, "cols");
    return n_->shape[1];
}

double Tensor::item() const {
    if (numel() != 1) {
        throw ContractError("item: tensor has " + std::to_string(numel()) +
                            " elements");
    }
    return n_->value[0];
}

std::vector<double>& Tensor::grad_buffer() {
    ensure_grad(*n_);
    return n_->grad;
}

void Tensor::zero_grad() { n_->grad.assign(n_->value.size(), 0.0); }

bool Tensor::all_finite() const {
    for (double v : n_->value) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

namespace {
bool g_backward_fault = false;
}  // namespace

void set_backward_fault_injection(bool enabled) { g_backward_fault = enabled; }
bool backward_fault_injection() { return g_backward_fault; }

void check_finite(const Tensor& t, const std::string& what) {
    if (!t.defined()) return;
    if (!t.all_finite()) {
        throw NumericError("non-finite value in " + what);
    }
}

// ---- elementwise helpers ----

namespace {

enum class BinKind { same, a_scalar, b_scalar };

BinKind bin_kind(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) return BinKind::same;
    if (b.numel() == 1) return BinKind::b_scalar;
    if (a.numel() == 1) return BinKind::a_scalar;
    throw DimError(std::string(op) + ": incompatible shapes " +
                   shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

/// Shared plumbing for binary elementwise ops with scalar broadcast.
/// fwd(a, b, y, n) fills same-shape; fwd_sb(a, b0, y, n) handles scalar b.
/// Backward receives the output grad and both value spans.
template <typename FwdSame, typename FwdScalarB, typename Bwd>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name,
                 FwdSame fwd_same, FwdScalarB fwd_scalar_b, Bwd bwd) {
    const BinKind kind = bin_kind(a, b, name);
    const Tensor& big = (kind == BinKind::a_scalar) ? b : a;
    auto out = make_node(big.shape());
    const std::size_t n = big.numel();
    switch (kind) {
        case BinKind::same:
            fwd_same(a.value().data(), b.value().data(), out->value.data(), n);
            break;
        case BinKind::b_scalar:
            fwd_scalar_b(a.value().data(), b.value()[0], out->value.data(), n, false);
            break;
        case BinKind::a_scalar:
            fwd_scalar_b(b.value().data(), a.value()[0], out->value.data(), n, true);
            break;
    }
    Graph* g = recording({&a, &b});
    if (g == nullptr) return Tensor(std::move(out));
    auto an = a.handle();
    auto bn = b.handle();
    return finish(out, g, [an, bn, on = NodePtr(out), kind, bwd]() {
        bwd(*an, *bn, *on, kind);
    });
}

void acc_scaled_sum(Node& dst, std::span<const double> g) {
    double s = 0.0;
    for (double v : g) s += v;
    ensure_grad(dst)[0] += s;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "add", [](const double* x, const double* y, double* o, std::size_t n) { kern::add(x, y, o, n); },
        [](const double* x, double c, double* o, std::size_t n, bool) {
            for (std::size_t i = 0; i < n; ++i) o[i] = x[i] + c;
        },
        [](Node& an, Node& bn, Node& on, BinKind kind) {
            const std::size_t n = on.value.size();
            if (kind == BinKind::same) {
                if (an.requires_grad) kern::acc(on.grad.data(), ensure_grad(an), n);
                if (bn.requires_grad) kern::acc(on.grad.data(), ensure_grad(bn), n);
            } else {
                Node& vec = (kind == BinKind::b_scalar) ? an : bn;
                Node& sc = (kind == BinKind::b_scalar) ? bn : an;
                if (vec.requires_grad) kern::acc(on.grad.data(), ensure_grad(vec), n);
                if (sc.requires_grad) acc_scaled_sum(sc, on.grad);
            }
        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "sub", [](const double* x, const double* y, double* o, std::size_t n) { kern::sub(x, y, o, n); },
        [](const double* x, double c, double* o, std::size_t n, bool swapped) {
            if (!swapped) {
                for (std::size_t i = 0; i < n; ++i) o[i] = x[i] - c;
            } else {
                for (std::size_t i = 0; i < n; ++i) o[i] = c - x[i];
            }
        },
        [](Node& an, Node& bn, Node& on, BinKind kind) {
            const std::size_t n = on.value.size();
            if (kind == BinKind::same) {
                if (an.requires_grad) kern::acc(on.grad.data(), ensure_grad(an), n);
                if (bn.requires_grad) kern::axpy(-1.0, on.grad.data(), ensure_grad(bn), n);
            } else if (kind == BinKind::b_scalar) {
                if (an.requires_grad) kern::acc(on.grad.data(), ensure_grad(an), n);
                if (bn.requires_grad) {
                    double s = 0.0;
                    for (double v : on.grad) s += v;
                    ensure_grad(bn)[0] -= s;
                }
            } else {
                if (an.requires_grad) acc_scaled_sum(an, on.grad);
                if (bn.requires_grad) kern::axpy(-1.0, on.grad.data(), ensure_grad(bn), n);
            }
        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "mul", [](const double* x, const double* y, double* o, std::size_t n) { kern::mul(x, y, o, n); },
        [](const double* x, double c, double* o, std::size_t n, bool) { kern::scale(x, c, o, n); },
        [](Node& an, Node& bn, Node& on, BinKind kind) {
            const std::size_t n = on.value.size();
            const double* g = on.grad.data();
            if (kind == BinKind::same) {
                if (an.requires_grad) {
                    double* da = ensure_grad(an);
                    const double* bv = bn.value.data();
                    for (std::size_t i = 0; i < n; ++i) da[i] += g[i] * bv[i];
                }
                if (bn.requires_grad) {
                    double* db = ensure_grad(bn);
                    const double* av = an.value.data();
                    for (std::size_t i = 0; i < n; ++i) db[i] += g[i] * av[i];
                }
            } else {
                Node& vec = (kind == BinKind::b_scalar) ? an : bn;
                Node& sc = (kind == BinKind::b_scalar) ? bn : an;
                if (vec.requires_grad) {
                    kern::axpy(sc.value[0], g, ensure_grad(vec), n);
                }
                if (sc.requires_grad) {
                    double s = 0.0;
                    const double* vv = vec.value.data();
                    for (std::size_t i = 0; i < n; ++i) s += g[i] * vv[i];
                    ensure_grad(sc)[0] += s;
                }
            }
        });
}

namespace {

/// Unary op plumbing: fwd fills output; bwd adds into the input grad.
template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& a, Fwd fwd, Bwd bwd) {
    auto out = make_node(a.shape());
    fwd(a.value().data(), out->value.data(), a.numel());
    Graph* g = recording({&a});
    if (g == nullptr) return Tensor(std::move(out));
    auto an = a.handle();
    return finish(out, g, [an, on = NodePtr(out), bwd]() {
        if (!an->requires_grad) return;
        bwd(an->value.data(), on->value.data(), on->grad.data(),
            ensure_grad(*an), on->value.size());
    });
}

}  // namespace

Tensor neg(const Tensor& a) {
    return unary_op(
        a, [](const double* x, double* y, std::size_t n) { kern::scale(x, -1.0, y, n); },
        [](const double*, const double*, const double* g, double* dx, std::size_t n) {
            kern::axpy(-1.0, g, dx, n);
        });
}

Tensor sigmoid(const Tensor& a) {
    return unary_op(
        a,
        [](const double* x, double* y, std::size_t n) {
            for (std::size_t i = 0; i < n; ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
        },
        [](const double*, const double* y, const double* g, double* dx, std::size_t n) {
            const double k = backward_fault_injection() ? 1.02 : 1.0;
            for (std::size_t i = 0; i < n; ++i) dx[i] += k * g[i] * y[i] * (1.0 - y[i]);
        });
}

Tensor tanh(const Tensor& a) {
    return unary_op(
        a,
        [](const double* x, double* y, std::size_t n) {
            for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
        },
        [](const double*, const double* y, const double* g, double* dx, std::size_t n) {
            for (std::size_t i = 0; i < n; ++i) dx[i] += g[i] * (1.0 - y[i] * y[i]);
        });
}

Tensor exp(const Tensor& a) {
    return unary_op(
        a,
        [](const double* x, double* y, std::size_t n) {
            for (std::size_t i = 0; i < n; ++i) y[i] = std::exp(x[i]);
        },
        [](const double*, const double* y, const double* g, double* dx, std::size_t n) {
            for (std::size_t i = 0; i < n; ++i) dx[i] += g[i] * y[i];
        });
}

Tensor log(const Tensor& a) {
    return unary_op(
        a,
        [](const double* x, double* y, std::size_t n) {
            for (std::size_t i = 0; i < n; ++i) {
                y[i] = std::log(x[i] < kLogClamp ? kLogClamp : x[i]);
            }
        },
        [](const double* x, const double*, const double* g, double* dx, std::size_t n) {
            for (std::size_t i = 0; i < n; ++i) {
                if (x[i] >= kLogClamp) dx[i] += g[i] / x[i];
            }
        });
}

Tensor relu(const Tensor& a) {
    return unary_op(
        a, [](const double* x, double* y, std::size_t n) { kern::relu(x, y, n); },
        [](const double* x, const double*, const double* g, double* dx, std::size_t n) {
            for (std::size_t i = 0; i < n; ++i) {
                if (x[i] > 0.0) dx[i] += g[i];
            }
        });
}

Tensor abs(const Tensor& a) {
    return unary_op(
        a,
        [](const double* x, double* y, std::size_t n) {
            for (std::size_t i = 0; i < n; ++i) y[i] = std::fabs(x[i]);
        },
        [](const double* x, const double*, const double* g, double* dx, std::size_t n) {
            for (std::size_t i = 0; i < n; ++i) {
                if (x[i] > 0.0) {
                    dx[i] += g[i];
                } else if (x[i] < 0.0) {
                    dx[i] -= g[i];
                }
            }
        });
}

Tensor add_const(const Tensor& a, double c) {
    return unary_op(
        a,
        [c](const double* x, double* y, std::size_t n) {
            for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + c;
        },
        [](const double*, const double*, const double* g, double* dx, std::size_t n) {
            kern::acc(g, dx, n);
        });
}

Tensor mul_const(const Tensor& a, double c) {
    return unary_op(
        a, [c](const double* x, double* y, std::size_t n) { kern::scale(x, c, y, n); },
        [c](const double*, const double*, const double* g, double* dx, std::size_t n) {
            kern::axpy(c, g, dx, n);
        });
}

// ---- reductions ----

Tensor sum(const Tensor& t) {
    auto out = make_node({1});
    double s = 0.0;
    for (double v : t.value()) s += v;
    out->value[0] = s;
    Graph* g = recording({&t});
    if (g == nullptr) return Tensor(std::move(out));
    auto tn = t.handle();
    return finish(out, g, [tn, on = NodePtr(out)]() {
        if (!tn->requires_grad) return;
        const double gv = on->grad[0];
        double* dt = ensure_grad(*tn);
        for (std::size_t i = 0; i < tn->value.size(); ++i) dt[i] += gv;
    });
}

namespace {

void check_axis(const Tensor& t, std::size_t axis, const char* op) {
    if (axis >= t.rank()) {
        throw DimError(std::string(op) + ": axis " + std::to_string(axis) +
                       " out of range for " + shape_str(t.shape()));
    }
}

Shape reduced_shape(const Tensor& t, std::size_t axis) {
    if (t.rank() == 1) return {1};
    return axis == 0 ? Shape{t.cols()} : Shape{t.rows()};
}

}  // namespace

Tensor sum(const Tensor& t, std::size_t axis) {
    check_axis(t, axis, "sum");
    if (t.rank() == 1) return sum(t);
    require_rank2(t, "sum");
    const std::size_t m = t.rows(), n = t.cols();
    auto out = make_node(reduced_shape(t, axis));
    const double* x = t.value().data();
    if (axis == 0) {
        for (std::size_t i = 0; i < m; ++i) {
            kern::acc(x + i * n, out->value.data(), n);
        }
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += x[i * n + j];
            out->value[i] = s;
        }
    }
    Graph* g = recording({&t});
    if (g == nullptr) return Tensor(std::move(out));
    auto tn = t.handle();
    return finish(out, g, [tn, on = NodePtr(out), axis, m, n]() {
        if (!tn->requires_grad) return;
        double* dt = ensure_grad(*tn);
        const double* go = on->grad.data();
        if (axis == 0) {
            for (std::size_t i = 0; i < m; ++i) kern::acc(go, dt + i * n, n);
        } else {
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) dt[i * n + j] += go[i];
            }
        }
    });
}

Tensor mean(const Tensor& t) {
    return mul_const(sum(t), 1.0 / static_cast<double>(t.numel()));
}

Tensor mean(const Tensor& t, std::size_t axis) {
    check_axis(t, axis, "mean");
    const std::size_t count = t.rank() == 1 ? t.numel() : t.dim(axis);
    return mul_const(sum(t, axis), 1.0 / static_cast<double>(count));
}

Tensor max(const Tensor& t) {
    if (t.numel() == 0) throw ContractError("max: empty tensor");
    auto out = make_node({1});
    std::size_t arg = 0;
    double best = t.value()[0];
    for (std::size_t i = 1; i < t.numel(); ++i) {
        if (t.value()[i] > best) {
            best = t.value()[i];
            arg = i;
        }
    }
    out->value[0] = best;
    Graph* g = recording({&t});
    if (g == nullptr) return Tensor(std::move(out));
    auto tn = t.handle();
    return finish(out, g, [tn, on = NodePtr(out), arg]() {
        if (!tn->requires_grad) return;
        ensure_grad(*tn)[arg] += on->grad[0];
    });
}

Tensor max(const Tensor& t, std::size_t axis) {
    check_axis(t, axis, "max");
    if (t.rank() == 1) return max(t);
    require_rank2(t, "max");
    const std::size_t m = t.rows(), n = t.cols();
    auto out = make_node(reduced_shape(t, axis));
    const double* x = t.value().data();
    std::vector<std::size_t> args(out->value.size());
    if (axis == 0) {
        for (std::size_t j = 0; j < n; ++j) {
            std::size_t arg = 0;
            double best = x[j];
            for (std::size_t i = 1; i < m; ++i) {
                if (x[i * n + j] > best) {
                    best = x[i * n + j];
                    arg = i;
                }
            }
            out->value[j] = best;
            args[j] = arg * n + j;
        }
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            std::size_t arg = 0;
            double best = x[i * n];
            for (std::size_t j = 1; j < n; ++j) {
                if (x[i * n + j] > best) {
                    best = x[i * n + j];
                    arg = j;
                }
            }
            out->value[i] = best;
            args[i] = i * n + arg;
        }
    }
    Graph* g = recording({&t});
    if (g == nullptr) return Tensor(std::move(out));
    auto tn = t.handle();
    return finish(out, g, [tn, on = NodePtr(out), args = std::move(args)]() {
        if (!tn->requires_grad) return;
        double* dt = ensure_grad(*tn);
        for (std::size_t i = 0; i < args.size(); ++i) dt[args[i]] += on->grad[i];
    });
}

// ---- softmax ----

namespace {

struct Lines {
    std::size_t count;   // number of lines
    std::size_t len;     // elements per line
    std::size_t stride;  // step between elements within a line
    std::size_t base;    // step between line starts
};

Lines line_layout(const Tensor& t, std::size_t axis) {
    if (t.rank() == 1) return {1, t.numel(), 1, 0};
    const std::size_t m = t.rows(), n = t.cols();
    if (axis == 1) return {m, n, 1, n};
    return {n, m, n, 1};
}

}  // namespace

Tensor softmax(const Tensor& t, std::size_t axis) {
    check_axis(t, axis, "softmax");
    if (t.rank() > 2) throw DimError("softmax: rank > 2 unsupported");
    auto out = make_node(t.shape());
    const Lines L = line_layout(t, axis);
    const double* x = t.value().data();
    double* y = out->value.data();
    for (std::size_t l = 0; l < L.count; ++l) {
        const std::size_t off = l * L.base;
        double m = x[off];
        for (std::size_t i = 1; i < L.len; ++i) {
            m = std::max(m, x[off + i * L.stride]);
        }
        double s = 0.0;
        for (std::size_t i = 0; i < L.len; ++i) {
            const double e = std::exp(x[off + i * L.stride] - m);
            y[off + i * L.stride] = e;
            s += e;
        }
        const double inv = 1.0 / s;
        for (std::size_t i = 0; i < L.len; ++i) y[off + i * L.stride] *= inv;
    }
    Graph* g = recording({&t});
    if (g == nullptr) return Tensor(std::move(out));
    auto tn = t.handle();
    return finish(out, g, [tn, on = NodePtr(out), L]() {
        if (!tn->requires_grad) return;
        double* dx = ensure_grad(*tn);
        const double* yv = on->value.data();
        const double* gv = on->grad.data();
        for (std::size_t l = 0; l < L.count; ++l) {
            const std::size_t off = l * L.base;
            double dot = 0.0;
            for (std::size_t i = 0; i < L.len; ++i) {
                const std::size_t idx = off + i * L.stride;
                dot += gv[idx] * yv[idx];
            }
            for (std::size_t i = 0; i < L.len; ++i) {
                const std::size_t idx = off + i * L.stride;
                dx[idx] += yv[idx] * (gv[idx] - dot);
            }
        }
    });
}

// ---- linear algebra / structure ----

namespace {

void transpose_raw(const double* x, double* y, std::size_t m, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) y[j * m + i] = x[i * n + j];
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) {
        throw DimError("matmul: inner dimensions disagree, " +
                       shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    auto out = make_node({m, n});
    kern::matmul_acc(a.value().data(), b.value().data(), out->value.data(), m, k, n);
    Graph* g = recording({&a, &b});
    if (g == nullptr) return Tensor(std::move(out));
    auto an = a.handle();
    auto bn = b.handle();
    return finish(out, g, [an, bn, on = NodePtr(out), m, k, n]() {
        const double* gv = on->grad.data();
        if (an->requires_grad) {
            // dA += G * B^T
            std::vector<double> bt(k * n);
            transpose_raw(bn->value.data(), bt.data(), k, n);
            kern::matmul_acc(gv, bt.data(), ensure_grad(*an), m, n, k);
        }
        if (bn->requires_grad) {
            // dB += A^T * G
            std::vector<double> at(m * k);
            transpose_raw(an->value.data(), at.data(), m, k);
            kern::matmul_acc(at.data(), gv, ensure_grad(*bn), k, m, n);
        }
    });
}

Tensor matmul_pret(const Tensor& a, const Tensor& b, const Tensor& b_t) {
    require_rank2(a, "matmul_pret");
    require_rank2(b, "matmul_pret");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) {
        throw DimError("matmul_pret: inner dimensions disagree");
    }
    if (b_t.rank() != 2 || b_t.rows() != n || b_t.cols() != k) {
        throw DimError("matmul_pret: b_t must be the transpose of b");
    }
    auto out = make_node({m, n});
    kern::matmul_acc(a.value().data(), b.value().data(), out->value.data(), m, k, n);
    Graph* g = recording({&a, &b});
    if (g == nullptr) return Tensor(std::move(out));
    auto an = a.handle();
    auto bn = b.handle();
    auto btn = b_t.handle();
    return finish(out, g, [an, bn, btn, on = NodePtr(out), m, k, n]() {
        const double* gv = on->grad.data();
        if (an->requires_grad) {
            kern::matmul_acc(gv, btn->value.data(), ensure_grad(*an), m, n, k);
        }
        if (bn->requires_grad) {
            if (m == 1) {
                // a^T of a row vector is the same buffer viewed as [k x 1]
                kern::matmul_acc(an->value.data(), gv, ensure_grad(*bn), k, 1, n);
            } else {
                std::vector<double> at(m * k);
                transpose_raw(an->value.data(), at.data(), m, k);
                kern::matmul_acc(at.data(), gv, ensure_grad(*bn), k, m, n);
            }
        }
    });
}

Tensor transpose(const Tensor& a) {
    require_rank2(a, "transpose");
    const std::size_t m = a.rows(), n = a.cols();
    auto out = make_node({n, m});
    transpose_raw(a.value().data(), out->value.data(), m, n);
    Graph* g = recording({&a});
    if (g == nullptr) return Tensor(std::move(out));
    auto an = a.handle();
    return finish(out, g, [an, on = NodePtr(out), m, n]() {
        if (!an->requires_grad) return;
        double* da = ensure_grad(*an);
        const double* gv = on->grad.data();
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t i = 0; i < m; ++i) da[i * n + j] += gv[j * m + i];
        }
    });
}

Tensor reshape(const Tensor& a, const Shape& shape) {
    if (shape_numel(shape) != a.numel()) {
        throw DimError("reshape: " + shape_str(a.shape()) + " -> " +
                       shape_str(shape) + " changes element count");
    }
    auto out = std::make_shared<Node>();
    out->shape = shape;
    out->value = std::vector<double>(a.value().begin(), a.value().end());
    Graph* g = recording({&a});
    if (g == nullptr) return Tensor(std::move(out));
    auto an = a.handle();
    return finish(out, g, [an, on = NodePtr(out)]() {
        if (!an->requires_grad) return;
        kern::acc(on->grad.data(), ensure_grad(*an), on->value.size());
    });
}

Tensor narrow(const Tensor& a, std::size_t axis, std::size_t start, std::size_t len) {
    check_axis(a, axis, "narrow");
    if (start + len > a.dim(axis)) {
        throw DimError("narrow: slice [" + std::to_string(start) + ", " +
                       std::to_string(start + len) + ") exceeds dim " +
                       std::to_string(a.dim(axis)));
    }
    NodePtr out;
    if (a.rank() == 1) {
        out = make_node({len});
        std::memcpy(out->value.data(), a.value().data() + start, len * sizeof(double));
    } else {
        require_rank2(a, "narrow");
        const std::size_t m = a.rows(), n = a.cols();
        if (axis == 0) {
            out = make_node({len, n});
            std::memcpy(out->value.data(), a.value().data() + start * n,
                        len * n * sizeof(double));
        } else {
            out = make_node({m, len});
            for (std::size_t i = 0; i < m; ++i) {
                std::memcpy(out->value.data() + i * len,
                            a.value().data() + i * n + start, len * sizeof(double));
            }
        }
    }
    Graph* g = recording({&a});
    if (g == nullptr) return Tensor(std::move(out));
    auto an = a.handle();
    return finish(out, g, [an, on = NodePtr(out), axis, start, len]() {
        if (!an->requires_grad) return;
        double* da = ensure_grad(*an);
        const double* gv = on->grad.data();
        if (an->shape.size() == 1) {
            kern::acc(gv, da + start, len);
        } else if (axis == 0) {
            const std::size_t n = an->shape[1];
            kern::acc(gv, da + start * n, len * n);
        } else {
            const std::size_t m = an->shape[0], n = an->shape[1];
            for (std::size_t i = 0; i < m; ++i) {
                kern::acc(gv + i * len, da + i * n + start, len);
            }
        }
    });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
    if (parts.empty()) throw ContractError("concat: no inputs");
    const std::size_t rank = parts[0].rank();
    if (axis >= rank) throw DimError("concat: axis out of range");
    NodePtr out;
    std::vector<std::size_t> offsets(parts.size());
    if (rank == 1) {
        std::size_t total = 0;
        for (std::size_t p = 0; p < parts.size(); ++p) {
            offsets[p] = total;
            total += parts[p].numel();
        }
        out = make_node({total});
        for (std::size_t p = 0; p < parts.size(); ++p) {
            std::memcpy(out->value.data() + offsets[p], parts[p].value().data(),
                        parts[p].numel() * sizeof(double));
        }
    } else if (axis == 0) {
        const std::size_t n = parts[0].cols();
        std::size_t rows = 0;
        for (std::size_t p = 0; p < parts.size(); ++p) {
            require_rank2(parts[p], "concat");
            if (parts[p].cols() != n) throw DimError("concat: column mismatch");
            offsets[p] = rows * n;
            rows += parts[p].rows();
        }
        out = make_node({rows, n});
        for (std::size_t p = 0; p < parts.size(); ++p) {
            std::memcpy(out->value.data() + offsets[p], parts[p].value().data(),
                        parts[p].numel() * sizeof(double));
        }
    } else {
        const std::size_t m = parts[0].rows();
        std::size_t cols = 0;
        for (std::size_t p = 0; p < parts.size(); ++p) {
            require_rank2(parts[p], "concat");
            if (parts[p].rows() != m) throw DimError("concat: row mismatch");
            offsets[p] = cols;
            cols += parts[p].cols();
        }
        out = make_node({m, cols});
        for (std::size_t p = 0; p < parts.size(); ++p) {
            const std::size_t w = parts[p].cols();
            for (std::size_t i = 0; i < m; ++i) {
                std::memcpy(out->value.data() + i * cols + offsets[p],
                            parts[p].value().data() + i * w, w * sizeof(double));
            }
        }
    }

    Graph* g = Graph::current();
    bool any_grad = false;
    for (const auto& p : parts) any_grad |= p.requires_grad();
    if (g == nullptr || !any_grad) return Tensor(std::move(out));

    std::vector<NodePtr> srcs;
    srcs.reserve(parts.size());
    for (const auto& p : parts) srcs.push_back(p.handle());
    return finish(out, g,
                  [srcs = std::move(srcs), offsets = std::move(offsets),
                   on = NodePtr(out), axis]() {
        const double* gv = on->grad.data();
        for (std::size_t p = 0; p < srcs.size(); ++p) {
            Node& src = *srcs[p];
            if (!src.requires_grad) continue;
            double* d = ensure_grad(src);
            if (src.shape.size() == 1 || axis == 0) {
                kern::acc(gv + offsets[p], d, src.value.size());
            } else {
                const std::size_t m = src.shape[0], w = src.shape[1];
                const std::size_t cols = on->shape[1];
                for (std::size_t i = 0; i < m; ++i) {
                    kern::acc(gv + i * cols + offsets[p], d + i * w, w);
                }
            }
        }
    });
}

Tensor row_scale(const Tensor& x, const Tensor& s) {
    require_rank2(x, "row_scale");
    if (s.rank() != 1 || s.numel() != x.rows()) {
        throw DimError("row_scale: scores shape " + shape_str(s.shape()) +
                       " does not match rows of " + shape_str(x.shape()));
    }
    const std::size_t m = x.rows(), n = x.cols();
    auto out = make_node({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        kern::scale(x.value().data() + i * n, s.value()[i],
                    out->value.data() + i * n, n);
    }
    Graph* g = recording({&x, &s});
    if (g == nullptr) return Tensor(std::move(out));
    auto xn = x.handle();
    auto sn = s.handle();
    return finish(out, g, [xn, sn, on = NodePtr(out), m, n]() {
        const double* gv = on->grad.data();
        if (xn->requires_grad) {
            double* dx = ensure_grad(*xn);
            for (std::size_t i = 0; i < m; ++i) {
                kern::axpy(sn->value[i], gv + i * n, dx + i * n, n);
            }
        }
        if (sn->requires_grad) {
            double* ds = ensure_grad(*sn);
            const double* xv = xn->value.data();
            for (std::size_t i = 0; i < m; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) dot += gv[i * n + j] * xv[i * n + j];
                ds[i] += dot;
            }
        }
    });
}

Tensor add_row_broadcast(const Tensor& x, const Tensor& v) {
    require_rank2(x, "add_row_broadcast");
    if (v.rank() != 1 || v.numel() != x.cols()) {
        throw DimError("add_row_broadcast: vector shape " + shape_str(v.shape()) +
                       " does not match cols of " + shape_str(x.shape()));
    }
    const std::size_t m = x.rows(), n = x.cols();
    auto out = make_node({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        kern::add(x.value().data() + i * n, v.value().data(),
                  out->value.data() + i * n, n);
    }
    Graph* g = recording({&x, &v});
    if (g == nullptr) return Tensor(std::move(out));
    auto xn = x.handle();
    auto vn = v.handle();
    return finish(out, g, [xn, vn, on = NodePtr(out), m, n]() {
        const double* gv = on->grad.data();
        if (xn->requires_grad) kern::acc(gv, ensure_grad(*xn), m * n);
        if (vn->requires_grad) {
            double* dv = ensure_grad(*vn);
            for (std::size_t i = 0; i < m; ++i) kern::acc(gv + i * n, dv, n);
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    require_rank2(x, "layer_norm");
    const std::size_t m = x.rows(), n = x.cols();
    if (gain.rank() != 1 || gain.numel() != n || bias.rank() != 1 || bias.numel() != n) {
        throw DimError("layer_norm: gain/bias must be rank-1 of width " +
                       std::to_string(n));
    }
    auto out = make_node({m, n});
    std::vector<double> xhat(m * n);
    std::vector<double> inv_w(m);
    const double* xv = x.value().data();
    const double* gn = gain.value().data();
    const double* bs = bias.value().data();
    for (std::size_t i = 0; i < m; ++i) {
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += xv[i * n + j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = xv[i * n + j] - mu;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double iw = 1.0 / std::sqrt(var + eps);
        inv_w[i] = iw;
        for (std::size_t j = 0; j < n; ++j) {
            const double xh = (xv[i * n + j] - mu) * iw;
            xhat[i * n + j] = xh;
            out->value[i * n + j] = gn[j] * xh + bs[j];
        }
    }
    Graph* g = recording({&x, &gain, &bias});
    if (g == nullptr) return Tensor(std::move(out));
    auto xn = x.handle();
    auto gnn = gain.handle();
    auto bn = bias.handle();
    return finish(out, g,
                  [xn, gnn, bn, on = NodePtr(out), xhat = std::move(xhat),
                   inv_w = std::move(inv_w), m, n]() {
        const double* gv = on->grad.data();
        const double* gw = gnn->value.data();
        if (xn->requires_grad) {
            double* dx = ensure_grad(*xn);
            std::vector<double> dxh(n);
            for (std::size_t i = 0; i < m; ++i) {
                double m1 = 0.0, m2 = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    dxh[j] = gv[i * n + j] * gw[j];
                    m1 += dxh[j];
                    m2 += dxh[j] * xhat[i * n + j];
                }
                m1 /= static_cast<double>(n);
                m2 /= static_cast<double>(n);
                for (std::size_t j = 0; j < n; ++j) {
                    dx[i * n + j] += (dxh[j] - m1 - xhat[i * n + j] * m2) * inv_w[i];
                }
            }
        }
        if (gnn->requires_grad) {
            double* dg = ensure_grad(*gnn);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    dg[j] += gv[i * n + j] * xhat[i * n + j];
                }
            }
        }
        if (bn->requires_grad) {
            double* db = ensure_grad(*bn);
            for (std::size_t i = 0; i < m; ++i) kern::acc(gv + i * n, db, n);
        }
    });
}

Tensor lstm_gates(const Tensor& pre, const Tensor& c_prev) {
    require_rank2(pre, "lstm_gates");
    require_rank2(c_prev, "lstm_gates");
    if (pre.rows() != 1 || c_prev.rows() != 1 || pre.cols() != 4 * c_prev.cols()) {
        throw DimError("lstm_gates: want pre [1 x 4H] and c_prev [1 x H], got " +
                       shape_str(pre.shape()) + " and " + shape_str(c_prev.shape()));
    }
    const std::size_t H = c_prev.cols();
    auto out = make_node({1, 2 * H});
    // Cached activations for the backward rule.
    std::vector<double> gates(4 * H);  // i, f, g, o after their nonlinearity
    std::vector<double> tanh_c(H);
    const double* p = pre.value().data();
    const double* cp = c_prev.value().data();
    for (std::size_t j = 0; j < H; ++j) {
        const double gi = 1.0 / (1.0 + std::exp(-p[j]));
        const double gf = 1.0 / (1.0 + std::exp(-p[H + j]));
        const double gg = std::tanh(p[2 * H + j]);
        const double go = 1.0 / (1.0 + std::exp(-p[3 * H + j]));
        const double c = gf * cp[j] + gi * gg;
        const double tc = std::tanh(c);
        gates[j] = gi;
        gates[H + j] = gf;
        gates[2 * H + j] = gg;
        gates[3 * H + j] = go;
        tanh_c[j] = tc;
        out->value[j] = go * tc;   // h
        out->value[H + j] = c;     // c
    }
    Graph* g = recording({&pre, &c_prev});
    if (g == nullptr) return Tensor(std::move(out));
    auto pn = pre.handle();
    auto cn = c_prev.handle();
    return finish(out, g,
                  [pn, cn, on = NodePtr(out), gates = std::move(gates),
                   tanh_c = std::move(tanh_c), H]() {
        const double* gv = on->grad.data();  // [dh | dc_out]
        const double* cp = cn->value.data();
        double* dp = pn->requires_grad ? ensure_grad(*pn) : nullptr;
        double* dcp = cn->requires_grad ? ensure_grad(*cn) : nullptr;
        for (std::size_t j = 0; j < H; ++j) {
            const double gi = gates[j], gf = gates[H + j];
            const double gg = gates[2 * H + j], go = gates[3 * H + j];
            const double tc = tanh_c[j];
            const double dh = gv[j];
            const double dout = dh * tc;
            const double dc = gv[H + j] + dh * go * (1.0 - tc * tc);
            if (dp != nullptr) {
                dp[j] += dc * gg * gi * (1.0 - gi);
                dp[H + j] += dc * cp[j] * gf * (1.0 - gf);
                dp[2 * H + j] += dc * gi * (1.0 - gg * gg);
                dp[3 * H + j] += dout * go * (1.0 - go);
            }
            if (dcp != nullptr) dcp[j] += dc * gf;
        }
    });
}

Tensor detach(const Tensor& t) {
    auto n = std::make_shared<Node>();
    n->shape = t.shape();
    n->value = std::vector<double>(t.value().begin(), t.value().end());
    return Tensor(std::move(n));
}

}  // namespace sumgan::ad
