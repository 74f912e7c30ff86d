#ifndef HYPERSAC_TENSOR_HPP_
#define HYPERSAC_TENSOR_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "hypersac/common.hpp"

namespace hypersac {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel_of(const Shape& s) {
    std::int64_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

namespace detail {

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// A recorded primitive: holds its inputs and a closure that routes the output
// gradient back to them. Nodes carry a global sequence number; execution order
// is a topological order of the graph, so replaying nodes by decreasing
// sequence visits every node after all of its consumers.
struct TensorNode {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    bool backward_ran = false;
    std::uint64_t seq = 0;
    std::vector<NodePtr> parents;
    std::function<void(TensorNode&)> backprop;

    std::int64_t numel() const { return static_cast<std::int64_t>(value.size()); }

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }

    bool on_graph() const { return requires_grad || static_cast<bool>(backprop); }
};

inline std::uint64_t next_seq() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

inline bool& no_grad_flag() {
    thread_local bool flag = false;
    return flag;
}

}  // namespace detail

// Disables graph recording in the current scope. Values are still computed.
class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::no_grad_flag()) { detail::no_grad_flag() = true; }
    ~NoGradGuard() { detail::no_grad_flag() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// Dense float64 tensor participating in a reverse-mode tape. Copying a Tensor
// copies the handle; two copies share value and gradient storage.
class Tensor {
public:
    Tensor() : n_(std::make_shared<detail::TensorNode>()) {}

    static Tensor zeros(const Shape& shape) {
        Tensor t;
        t.n_->shape = shape;
        t.n_->value.assign(static_cast<std::size_t>(numel_of(shape)), 0.0);
        return t;
    }

    static Tensor full(const Shape& shape, double v) {
        Tensor t = zeros(shape);
        std::fill(t.n_->value.begin(), t.n_->value.end(), v);
        return t;
    }

    static Tensor from(const Shape& shape, std::vector<double> data) {
        if (numel_of(shape) != static_cast<std::int64_t>(data.size()))
            throw DimensionError("Tensor::from: shape " + shape_str(shape) + " does not match data length " +
                                 std::to_string(data.size()));
        Tensor t;
        t.n_->shape = shape;
        t.n_->value = std::move(data);
        return t;
    }

    static Tensor scalar(double v) { return from({1}, {v}); }

    // Leaf with requires_grad set; gradients accumulate here during backward.
    static Tensor param(const Shape& shape, std::vector<double> data) {
        Tensor t = from(shape, std::move(data));
        t.n_->requires_grad = true;
        return t;
    }

    const Shape& shape() const { return n_->shape; }
    std::int64_t numel() const { return n_->numel(); }
    std::int64_t rank() const { return static_cast<std::int64_t>(n_->shape.size()); }

    std::int64_t rows() const {
        if (rank() != 2) throw DimensionError("rows(): tensor is not rank-2: " + shape_str(shape()));
        return n_->shape[0];
    }
    std::int64_t cols() const {
        if (rank() != 2) throw DimensionError("cols(): tensor is not rank-2: " + shape_str(shape()));
        return n_->shape[1];
    }

    const std::vector<double>& value() const { return n_->value; }
    std::vector<double>& mutable_value() { return n_->value; }

    double item() const {
        if (numel() != 1) throw UsageError("item(): tensor has " + std::to_string(numel()) + " elements");
        return n_->value[0];
    }

    bool requires_grad() const { return n_->requires_grad; }
    bool has_grad() const { return n_->grad.size() == n_->value.size(); }

    const std::vector<double>& grad() const {
        if (!has_grad()) throw UsageError("grad(): no gradient present; call backward first");
        return n_->grad;
    }
    std::vector<double>& mutable_grad() {
        n_->ensure_grad();
        return n_->grad;
    }

    void zero_grad() {
        if (has_grad()) std::fill(n_->grad.begin(), n_->grad.end(), 0.0);
    }

    // Value copy with no graph attachment.
    Tensor detach() const {
        Tensor t;
        t.n_->shape = n_->shape;
        t.n_->value = n_->value;
        return t;
    }

    // Reverse pass from a scalar loss. Each reachable recorded node is visited
    // exactly once, after all of its consumers. A second backward through the
    // same loss node is rejected.
    void backward() const {
        if (numel() != 1) throw UsageError("backward(): loss must be scalar, got " + shape_str(shape()));
        if (n_->backward_ran) throw UsageError("backward(): already ran on this node; rebuild the graph first");
        n_->backward_ran = true;

        std::vector<detail::TensorNode*> order;
        std::unordered_set<detail::TensorNode*> seen;
        std::vector<detail::TensorNode*> stack{n_.get()};
        seen.insert(n_.get());
        while (!stack.empty()) {
            detail::TensorNode* node = stack.back();
            stack.pop_back();
            order.push_back(node);
            for (const auto& p : node->parents) {
                if (p->on_graph() && seen.insert(p.get()).second) stack.push_back(p.get());
            }
        }
        std::sort(order.begin(), order.end(),
                  [](const detail::TensorNode* a, const detail::TensorNode* b) { return a->seq > b->seq; });

        n_->ensure_grad();
        n_->grad[0] += 1.0;
        for (detail::TensorNode* node : order) {
            if (node->backprop) {
                for (auto& p : node->parents)
                    if (p->on_graph()) p->ensure_grad();
                node->backprop(*node);
            }
        }
    }

    detail::TensorNode* node() const { return n_.get(); }
    const detail::NodePtr& node_ptr() const { return n_; }

    // Builds an op output. Recording is skipped under NoGradGuard or when no
    // input is on the graph, in which case the result is a plain value.
    static Tensor make_op(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                          std::function<void(detail::TensorNode&)> backprop) {
        Tensor out;
        out.n_->shape = std::move(shape);
        out.n_->value = std::move(value);
        if (detail::no_grad_flag()) return out;
        bool record = false;
        for (const auto& in : inputs)
            if (in.n_->on_graph()) record = true;
        if (!record) return out;
        out.n_->seq = detail::next_seq();
        out.n_->parents.reserve(inputs.size());
        for (auto& in : inputs) out.n_->parents.push_back(in.n_);
        out.n_->backprop = std::move(backprop);
        return out;
    }

private:
    detail::NodePtr n_;
};

namespace detail {

enum class Broadcast { kSame, kRowVec, kScalarLeft, kScalarRight, kRowVecLeft };

inline Broadcast classify(const Tensor& a, const Tensor& b, const char* opname) {
    if (a.shape() == b.shape()) return Broadcast::kSame;
    if (a.numel() == 1) return Broadcast::kScalarLeft;
    if (b.numel() == 1) return Broadcast::kScalarRight;
    if (a.rank() == 2 && b.rank() == 1 && a.shape()[1] == b.shape()[0]) return Broadcast::kRowVec;
    if (b.rank() == 2 && a.rank() == 1 && b.shape()[1] == a.shape()[0]) return Broadcast::kRowVecLeft;
    throw DimensionError(std::string(opname) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
}

}  // namespace detail

// ---- elementwise binary ops with {same-shape, row-vector, scalar} broadcast

namespace detail {

template <typename Fwd, typename BwdA, typename BwdB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, BwdA bwd_a, BwdB bwd_b) {
    const Broadcast mode = classify(a, b, name);
    const auto& av = a.value();
    const auto& bv = b.value();
    Shape out_shape;
    std::vector<double> out;
    const std::int64_t an = a.numel(), bn = b.numel();

    switch (mode) {
        case Broadcast::kSame: {
            out_shape = a.shape();
            out.resize(static_cast<std::size_t>(an));
            for (std::int64_t i = 0; i < an; ++i) out[i] = fwd(av[i], bv[i]);
            break;
        }
        case Broadcast::kScalarLeft: {
            out_shape = b.shape();
            out.resize(static_cast<std::size_t>(bn));
            for (std::int64_t i = 0; i < bn; ++i) out[i] = fwd(av[0], bv[i]);
            break;
        }
        case Broadcast::kScalarRight: {
            out_shape = a.shape();
            out.resize(static_cast<std::size_t>(an));
            for (std::int64_t i = 0; i < an; ++i) out[i] = fwd(av[i], bv[0]);
            break;
        }
        case Broadcast::kRowVec: {
            out_shape = a.shape();
            out.resize(static_cast<std::size_t>(an));
            const std::int64_t d = b.numel();
            for (std::int64_t i = 0; i < an; ++i) out[i] = fwd(av[i], bv[i % d]);
            break;
        }
        case Broadcast::kRowVecLeft: {
            out_shape = b.shape();
            out.resize(static_cast<std::size_t>(bn));
            const std::int64_t d = a.numel();
            for (std::int64_t i = 0; i < bn; ++i) out[i] = fwd(av[i % d], bv[i]);
            break;
        }
    }

    Tensor ta = a, tb = b;
    return Tensor::make_op(out_shape, std::move(out), {a, b}, [ta, tb, mode, bwd_a, bwd_b](detail::TensorNode& n) {
        auto* pa = ta.node();
        auto* pb = tb.node();
        const auto& g = n.grad;
        const auto& av2 = pa->value;
        const auto& bv2 = pb->value;
        const std::int64_t on = n.numel();
        if (pa->on_graph()) {
            auto& ga = pa->grad;
            switch (mode) {
                case Broadcast::kSame:
                case Broadcast::kScalarRight:
                case Broadcast::kRowVec:
                    for (std::int64_t i = 0; i < on; ++i)
                        ga[i] += g[i] * bwd_a(av2[i], bv2[mode == Broadcast::kSame ? i
                                                          : mode == Broadcast::kScalarRight
                                                              ? 0
                                                              : i % static_cast<std::int64_t>(bv2.size())]);
                    break;
                case Broadcast::kScalarLeft:
                    for (std::int64_t i = 0; i < on; ++i) ga[0] += g[i] * bwd_a(av2[0], bv2[i]);
                    break;
                case Broadcast::kRowVecLeft: {
                    const std::int64_t d = static_cast<std::int64_t>(av2.size());
                    for (std::int64_t i = 0; i < on; ++i) ga[i % d] += g[i] * bwd_a(av2[i % d], bv2[i]);
                    break;
                }
            }
        }
        if (pb->on_graph()) {
            auto& gb = pb->grad;
            switch (mode) {
                case Broadcast::kSame:
                case Broadcast::kScalarLeft:
                case Broadcast::kRowVecLeft:
                    for (std::int64_t i = 0; i < on; ++i)
                        gb[i] += g[i] * bwd_b(av2[mode == Broadcast::kSame ? i
                                                  : mode == Broadcast::kScalarLeft
                                                      ? 0
                                                      : i % static_cast<std::int64_t>(av2.size())],
                                              bv2[i]);
                    break;
                case Broadcast::kScalarRight:
                    for (std::int64_t i = 0; i < on; ++i) gb[0] += g[i] * bwd_b(av2[i], bv2[0]);
                    break;
                case Broadcast::kRowVec: {
                    const std::int64_t d = static_cast<std::int64_t>(bv2.size());
                    for (std::int64_t i = 0; i < on; ++i) gb[i % d] += g[i] * bwd_b(av2[i], bv2[i % d]);
                    break;
                }
            }
        }
    });
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        a, b, "div", [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

// ---- elementwise unary ops

namespace detail {

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& x, Fwd fwd, Bwd bwd) {
    const auto& xv = x.value();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
    Tensor tx = x;
    return Tensor::make_op(x.shape(), std::move(out), {x}, [tx, bwd](detail::TensorNode& n) {
        auto* px = tx.node();
        if (!px->on_graph()) return;
        auto& gx = px->grad;
        const auto& g = n.grad;
        const auto& xv2 = px->value;
        const auto& yv = n.value;
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * bwd(xv2[i], yv[i]);
    });
}

}  // namespace detail

inline Tensor relu(const Tensor& x) {
    return detail::unary_op(
        x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Tensor exp(const Tensor& x) {
    return detail::unary_op(
        x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& x) {
    return detail::unary_op(
        x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

inline Tensor tanh(const Tensor& x) {
    return detail::unary_op(
        x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

inline Tensor scale(const Tensor& x, double c) {
    return detail::unary_op(
        x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

inline Tensor offset(const Tensor& x, double c) {
    return detail::unary_op(
        x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

inline Tensor neg(const Tensor& x) { return scale(x, -1.0); }

// ---- matrix ops

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw DimensionError("matmul: expects rank-2 operands, got " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    const std::int64_t m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
    if (k != k2)
        throw DimensionError("matmul: inner extents differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));

    std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
    {
        const double* av = a.value().data();
        const double* bv = b.value().data();
        double* ov = out.data();
        parallel_for(static_cast<std::size_t>(m), static_cast<std::size_t>(m * n * k),
                     [&](std::size_t lo, std::size_t hi) {
                         for (std::size_t i = lo; i < hi; ++i) {
                             const double* arow = av + i * static_cast<std::size_t>(k);
                             double* orow = ov + i * static_cast<std::size_t>(n);
                             for (std::int64_t p = 0; p < k; ++p) {
                                 const double s = arow[p];
                                 const double* brow = bv + static_cast<std::size_t>(p) * n;
                                 for (std::int64_t j = 0; j < n; ++j) orow[j] += s * brow[j];
                             }
                         }
                     });
    }

    Tensor ta = a, tb = b;
    return Tensor::make_op({m, n}, std::move(out), {a, b}, [ta, tb, m, k, n](detail::TensorNode& node) {
        auto* pa = ta.node();
        auto* pb = tb.node();
        const double* g = node.grad.data();
        if (pa->on_graph()) {
            // dA = dC * B^T
            double* ga = pa->grad.data();
            const double* bv = pb->value.data();
            parallel_for(static_cast<std::size_t>(m), static_cast<std::size_t>(m * n * k),
                         [&](std::size_t lo, std::size_t hi) {
                             for (std::size_t i = lo; i < hi; ++i) {
                                 const double* grow = g + i * static_cast<std::size_t>(n);
                                 double* garow = ga + i * static_cast<std::size_t>(k);
                                 for (std::int64_t p = 0; p < k; ++p) {
                                     const double* brow = bv + static_cast<std::size_t>(p) * n;
                                     double s = 0.0;
                                     for (std::int64_t j = 0; j < n; ++j) s += grow[j] * brow[j];
                                     garow[p] += s;
                                 }
                             }
                         });
        }
        if (pb->on_graph()) {
            // dB = A^T * dC
            double* gb = pb->grad.data();
            const double* av = pa->value.data();
            parallel_for(static_cast<std::size_t>(k), static_cast<std::size_t>(m * n * k),
                         [&](std::size_t lo, std::size_t hi) {
                             for (std::size_t p = lo; p < hi; ++p) {
                                 double* gbrow = gb + p * static_cast<std::size_t>(n);
                                 for (std::int64_t i = 0; i < m; ++i) {
                                     const double s = av[static_cast<std::size_t>(i) * k + p];
                                     if (s == 0.0) continue;
                                     const double* grow = g + static_cast<std::size_t>(i) * n;
                                     for (std::int64_t j = 0; j < n; ++j) gbrow[j] += s * grow[j];
                                 }
                             }
                         });
        }
    });
}

inline Tensor transpose(const Tensor& x) {
    const std::int64_t r = x.rows(), c = x.cols();
    std::vector<double> out(static_cast<std::size_t>(r * c));
    const auto& xv = x.value();
    for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j) out[static_cast<std::size_t>(j * r + i)] = xv[static_cast<std::size_t>(i * c + j)];
    Tensor tx = x;
    return Tensor::make_op({c, r}, std::move(out), {x}, [tx, r, c](detail::TensorNode& n) {
        auto* px = tx.node();
        if (!px->on_graph()) return;
        auto& gx = px->grad;
        const auto& g = n.grad;
        for (std::int64_t i = 0; i < r; ++i)
            for (std::int64_t j = 0; j < c; ++j) gx[static_cast<std::size_t>(i * c + j)] += g[static_cast<std::size_t>(j * r + i)];
    });
}

// y = x * W^T for W stored row-major as (out x in); the hot path of every
// layer. Equivalent to matmul(x, transpose(W)) without materializing W^T.
inline Tensor linear(const Tensor& x, const Tensor& w) {
    if (x.rank() != 2 || w.rank() != 2)
        throw DimensionError("linear: expects rank-2 operands");
    const std::int64_t b = x.rows(), in = x.cols(), out = w.rows();
    if (w.cols() != in)
        throw DimensionError("linear: input extent " + shape_str(x.shape()) + " does not match weight " +
                             shape_str(w.shape()));

    std::vector<double> y(static_cast<std::size_t>(b * out), 0.0);
    {
        // Accumulate y[i,:] += x[i,j] * W^T[j,:]; the transposed copy keeps the
        // inner loop contiguous so it vectorizes without FP reassociation.
        std::vector<double> wt(static_cast<std::size_t>(in * out));
        const double* wv = w.value().data();
        for (std::int64_t o = 0; o < out; ++o)
            for (std::int64_t j = 0; j < in; ++j)
                wt[static_cast<std::size_t>(j * out + o)] = wv[static_cast<std::size_t>(o * in + j)];
        const double* xv = x.value().data();
        const double* wtv = wt.data();
        double* yv = y.data();
        parallel_for(static_cast<std::size_t>(b), static_cast<std::size_t>(b * in * out),
                     [&](std::size_t lo, std::size_t hi) {
                         for (std::size_t i = lo; i < hi; ++i) {
                             const double* xrow = xv + i * static_cast<std::size_t>(in);
                             double* yrow = yv + i * static_cast<std::size_t>(out);
                             for (std::int64_t j = 0; j < in; ++j) {
                                 const double s = xrow[j];
                                 const double* wtrow = wtv + static_cast<std::size_t>(j) * out;
                                 for (std::int64_t o = 0; o < out; ++o) yrow[o] += s * wtrow[o];
                             }
                         }
                     });
    }

    Tensor tx = x, tw = w;
    return Tensor::make_op({b, out}, std::move(y), {x, w}, [tx, tw, b, in, out](detail::TensorNode& node) {
        auto* px = tx.node();
        auto* pw = tw.node();
        const double* g = node.grad.data();
        if (px->on_graph()) {
            // dX = dY * W
            double* gx = px->grad.data();
            const double* wv = pw->value.data();
            parallel_for(static_cast<std::size_t>(b), static_cast<std::size_t>(b * in * out),
                         [&](std::size_t lo, std::size_t hi) {
                             for (std::size_t i = lo; i < hi; ++i) {
                                 const double* grow = g + i * static_cast<std::size_t>(out);
                                 double* gxrow = gx + i * static_cast<std::size_t>(in);
                                 for (std::int64_t o = 0; o < out; ++o) {
                                     const double s = grow[o];
                                     if (s == 0.0) continue;
                                     const double* wrow = wv + static_cast<std::size_t>(o) * in;
                                     for (std::int64_t j = 0; j < in; ++j) gxrow[j] += s * wrow[j];
                                 }
                             }
                         });
        }
        if (pw->on_graph()) {
            // dW = dY^T * X
            double* gw = pw->grad.data();
            const double* xv = px->value.data();
            parallel_for(static_cast<std::size_t>(out), static_cast<std::size_t>(b * in * out),
                         [&](std::size_t lo, std::size_t hi) {
                             for (std::size_t o = lo; o < hi; ++o) {
                                 double* gwrow = gw + o * static_cast<std::size_t>(in);
                                 for (std::int64_t i = 0; i < b; ++i) {
                                     const double s = g[static_cast<std::size_t>(i) * out + o];
                                     if (s == 0.0) continue;
                                     const double* xrow = xv + static_cast<std::size_t>(i) * in;
                                     for (std::int64_t j = 0; j < in; ++j) gwrow[j] += s * xrow[j];
                                 }
                             }
                         });
        }
    });
}

// ---- last-axis structured ops

namespace detail {

inline void last_axis_dims(const Tensor& x, std::int64_t& rows, std::int64_t& d) {
    if (x.rank() == 0 || x.numel() == 0) throw DimensionError("last-axis op: empty tensor");
    d = x.shape().back();
    rows = x.numel() / d;
}

}  // namespace detail

inline Tensor softmax_lastaxis(const Tensor& x) {
    std::int64_t rows, d;
    detail::last_axis_dims(x, rows, d);
    if (d < 1) throw DimensionError("softmax_lastaxis: last extent must be >= 1");
    const auto& xv = x.value();
    std::vector<double> out(xv.size());
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* in = xv.data() + r * d;
        double* o = out.data() + r * d;
        double mx = in[0];
        for (std::int64_t j = 1; j < d; ++j) mx = std::max(mx, in[j]);
        double sum = 0.0;
        for (std::int64_t j = 0; j < d; ++j) {
            o[j] = std::exp(in[j] - mx);
            sum += o[j];
        }
        for (std::int64_t j = 0; j < d; ++j) o[j] /= sum;
    }
    Tensor tx = x;
    return Tensor::make_op(x.shape(), std::move(out), {x}, [tx, rows, d](detail::TensorNode& n) {
        auto* px = tx.node();
        if (!px->on_graph()) return;
        const auto& g = n.grad;
        const auto& y = n.value;
        auto& gx = px->grad;
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* gr = g.data() + r * d;
            const double* yr = y.data() + r * d;
            double dot = 0.0;
            for (std::int64_t j = 0; j < d; ++j) dot += gr[j] * yr[j];
            double* gxr = gx.data() + r * d;
            for (std::int64_t j = 0; j < d; ++j) gxr[j] += yr[j] * (gr[j] - dot);
        }
    });
}

inline Tensor l2_normalize_lastaxis(const Tensor& x, double eps = 1e-8) {
    std::int64_t rows, d;
    detail::last_axis_dims(x, rows, d);
    const auto& xv = x.value();
    std::vector<double> out(xv.size());
    std::vector<double> inv_norm(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* in = xv.data() + r * d;
        double ss = 0.0;
        for (std::int64_t j = 0; j < d; ++j) ss += in[j] * in[j];
        const double inv = 1.0 / std::sqrt(ss + eps);
        inv_norm[static_cast<std::size_t>(r)] = inv;
        double* o = out.data() + r * d;
        for (std::int64_t j = 0; j < d; ++j) o[j] = in[j] * inv;
    }
    Tensor tx = x;
    return Tensor::make_op(x.shape(), std::move(out), {x},
                           [tx, rows, d, inv_norm](detail::TensorNode& n) {
                               auto* px = tx.node();
                               if (!px->on_graph()) return;
                               const auto& g = n.grad;
                               const auto& xv2 = px->value;
                               auto& gx = px->grad;
                               for (std::int64_t r = 0; r < rows; ++r) {
                                   const double inv = inv_norm[static_cast<std::size_t>(r)];
                                   const double* gr = g.data() + r * d;
                                   const double* xr = xv2.data() + r * d;
                                   double dot = 0.0;
                                   for (std::int64_t j = 0; j < d; ++j) dot += gr[j] * xr[j];
                                   const double inv3 = inv * inv * inv;
                                   double* gxr = gx.data() + r * d;
                                   for (std::int64_t j = 0; j < d; ++j) gxr[j] += gr[j] * inv - xr[j] * dot * inv3;
                               }
                           });
}

inline Tensor layernorm_lastaxis(const Tensor& x, double eps = 1e-6) {
    std::int64_t rows, d;
    detail::last_axis_dims(x, rows, d);
    const auto& xv = x.value();
    std::vector<double> out(xv.size());
    std::vector<double> inv_std(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* in = xv.data() + r * d;
        double mean = 0.0;
        for (std::int64_t j = 0; j < d; ++j) mean += in[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::int64_t j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(r)] = inv;
        double* o = out.data() + r * d;
        for (std::int64_t j = 0; j < d; ++j) o[j] = (in[j] - mean) * inv;
    }
    Tensor tx = x;
    return Tensor::make_op(x.shape(), std::move(out), {x},
                           [tx, rows, d, inv_std](detail::TensorNode& n) {
                               auto* px = tx.node();
                               if (!px->on_graph()) return;
                               const auto& g = n.grad;
                               const auto& y = n.value;
                               auto& gx = px->grad;
                               for (std::int64_t r = 0; r < rows; ++r) {
                                   const double inv = inv_std[static_cast<std::size_t>(r)];
                                   const double* gr = g.data() + r * d;
                                   const double* yr = y.data() + r * d;
                                   double gmean = 0.0, gydot = 0.0;
                                   for (std::int64_t j = 0; j < d; ++j) {
                                       gmean += gr[j];
                                       gydot += gr[j] * yr[j];
                                   }
                                   gmean /= static_cast<double>(d);
                                   gydot /= static_cast<double>(d);
                                   double* gxr = gx.data() + r * d;
                                   for (std::int64_t j = 0; j < d; ++j)
                                       gxr[j] += inv * (gr[j] - gmean - yr[j] * gydot);
                               }
                           });
}

// ---- reductions and shape ops

inline Tensor sum_all(const Tensor& x) {
    double s = 0.0;
    for (double v : x.value()) s += v;
    Tensor tx = x;
    return Tensor::make_op({1}, {s}, {x}, [tx](detail::TensorNode& n) {
        auto* px = tx.node();
        if (!px->on_graph()) return;
        const double g = n.grad[0];
        for (auto& gv : px->grad) gv += g;
    });
}

inline Tensor mean_all(const Tensor& x) {
    const double inv = 1.0 / static_cast<double>(x.numel());
    double s = 0.0;
    for (double v : x.value()) s += v;
    Tensor tx = x;
    return Tensor::make_op({1}, {s * inv}, {x}, [tx, inv](detail::TensorNode& n) {
        auto* px = tx.node();
        if (!px->on_graph()) return;
        const double g = n.grad[0] * inv;
        for (auto& gv : px->grad) gv += g;
    });
}

inline Tensor sum_lastaxis(const Tensor& x) {
    std::int64_t rows, d;
    detail::last_axis_dims(x, rows, d);
    std::vector<double> out(static_cast<std::size_t>(rows), 0.0);
    const auto& xv = x.value();
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* in = xv.data() + r * d;
        for (std::int64_t j = 0; j < d; ++j) out[static_cast<std::size_t>(r)] += in[j];
    }
    Tensor tx = x;
    return Tensor::make_op({rows, 1}, std::move(out), {x}, [tx, rows, d](detail::TensorNode& n) {
        auto* px = tx.node();
        if (!px->on_graph()) return;
        const auto& g = n.grad;
        auto& gx = px->grad;
        for (std::int64_t r = 0; r < rows; ++r) {
            const double gr = g[static_cast<std::size_t>(r)];
            double* gxr = gx.data() + r * d;
            for (std::int64_t j = 0; j < d; ++j) gxr[j] += gr;
        }
    });
}

inline Tensor concat_lastaxis(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.rows() != b.rows())
        throw DimensionError("concat_lastaxis: need rank-2 with equal rows, got " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    const std::int64_t r = a.rows(), da = a.cols(), db = b.cols();
    std::vector<double> out(static_cast<std::size_t>(r * (da + db)));
    const auto& av = a.value();
    const auto& bv = b.value();
    for (std::int64_t i = 0; i < r; ++i) {
        std::copy_n(av.data() + i * da, da, out.data() + i * (da + db));
        std::copy_n(bv.data() + i * db, db, out.data() + i * (da + db) + da);
    }
    Tensor ta = a, tb = b;
    return Tensor::make_op({r, da + db}, std::move(out), {a, b}, [ta, tb, r, da, db](detail::TensorNode& n) {
        auto* pa = ta.node();
        auto* pb = tb.node();
        const auto& g = n.grad;
        if (pa->on_graph()) {
            auto& ga = pa->grad;
            for (std::int64_t i = 0; i < r; ++i)
                for (std::int64_t j = 0; j < da; ++j) ga[static_cast<std::size_t>(i * da + j)] += g[static_cast<std::size_t>(i * (da + db) + j)];
        }
        if (pb->on_graph()) {
            auto& gb = pb->grad;
            for (std::int64_t i = 0; i < r; ++i)
                for (std::int64_t j = 0; j < db; ++j) gb[static_cast<std::size_t>(i * db + j)] += g[static_cast<std::size_t>(i * (da + db) + da + j)];
        }
    });
}

// Appends a constant column, e.g. the shift coordinate of the input embedding.
inline Tensor append_const_lastaxis(const Tensor& x, double c) {
    const std::int64_t r = x.rows(), d = x.cols();
    std::vector<double> out(static_cast<std::size_t>(r * (d + 1)));
    const auto& xv = x.value();
    for (std::int64_t i = 0; i < r; ++i) {
        std::copy_n(xv.data() + i * d, d, out.data() + i * (d + 1));
        out[static_cast<std::size_t>(i * (d + 1) + d)] = c;
    }
    Tensor tx = x;
    return Tensor::make_op({r, d + 1}, std::move(out), {x}, [tx, r, d](detail::TensorNode& n) {
        auto* px = tx.node();
        if (!px->on_graph()) return;
        auto& gx = px->grad;
        const auto& g = n.grad;
        for (std::int64_t i = 0; i < r; ++i)
            for (std::int64_t j = 0; j < d; ++j) gx[static_cast<std::size_t>(i * d + j)] += g[static_cast<std::size_t>(i * (d + 1) + j)];
    });
}

inline Tensor slice_lastaxis(const Tensor& x, std::int64_t start, std::int64_t len) {
    const std::int64_t r = x.rows(), d = x.cols();
    if (start < 0 || len < 1 || start + len > d)
        throw DimensionError("slice_lastaxis: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                             ") out of " + shape_str(x.shape()));
    std::vector<double> out(static_cast<std::size_t>(r * len));
    const auto& xv = x.value();
    for (std::int64_t i = 0; i < r; ++i) std::copy_n(xv.data() + i * d + start, len, out.data() + i * len);
    Tensor tx = x;
    return Tensor::make_op({r, len}, std::move(out), {x}, [tx, r, d, start, len](detail::TensorNode& n) {
        auto* px = tx.node();
        if (!px->on_graph()) return;
        auto& gx = px->grad;
        const auto& g = n.grad;
        for (std::int64_t i = 0; i < r; ++i)
            for (std::int64_t j = 0; j < len; ++j) gx[static_cast<std::size_t>(i * d + start + j)] += g[static_cast<std::size_t>(i * len + j)];
    });
}

// min(a, b) elementwise; ties route the gradient to a.
inline Tensor minimum(const Tensor& a, const Tensor& b) { return sub(a, relu(sub(a, b))); }

}  // namespace hypersac

#endif  // HYPERSAC_TENSOR_HPP_
