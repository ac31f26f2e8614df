#include "camo/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace camo {

namespace {

thread_local bool g_grad_enabled = true;

std::vector<double>& ensure_grad(detail::TensorNode& n) {
    if (n.grad.empty()) n.grad.assign(n.data.size(), 0.0);
    return n.grad;
}

bool wants_grad(const detail::TensorNode& n) { return n.requires_grad; }

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kProbEps = 1e-12;

}  // namespace

std::int64_t numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
        check_shape(d >= 0, "negative dimension in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

// ---------------------------------------------------------------------------
// construction

Tensor Tensor::make(Shape shape, std::vector<double> data) {
    check_shape(numel(shape) == static_cast<std::int64_t>(data.size()),
                "data length does not match shape " + shape_str(shape));
    auto n = std::make_shared<detail::TensorNode>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    return Tensor(std::move(n));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const auto n = static_cast<std::size_t>(numel(shape));
    auto t = make(std::move(shape), std::vector<double>(n, 0.0));
    return t.set_requires_grad(requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = static_cast<std::size_t>(numel(shape));
    auto t = make(std::move(shape), std::vector<double>(n, value));
    return t.set_requires_grad(requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    auto t = make(std::move(shape), std::move(data));
    return t.set_requires_grad(requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
    const auto n = static_cast<std::size_t>(numel(shape));
    std::vector<double> data(n);
    for (auto& v : data) v = rng.normal() * stddev;
    auto t = make(std::move(shape), std::move(data));
    return t.set_requires_grad(requires_grad);
}

double Tensor::item() const {
    check_shape(node()->data.size() == 1, "item() on tensor of shape " + shape_str(shape()));
    return node()->data[0];
}

Tensor& Tensor::set_requires_grad(bool v) {
    check_contract(!v || node()->backward_fn == nullptr,
                   "requires_grad can only be toggled on leaf tensors");
    node()->requires_grad = v;
    return *this;
}

const std::vector<double>& Tensor::grad() const {
    check_contract(has_grad(), "gradient not populated; did backward() run?");
    return node()->grad;
}

void Tensor::zero_grad() { node()->grad.clear(); }

Tensor Tensor::detach() const {
    return from_data(shape(), data(), false);
}

Tensor Tensor::clone() const {
    return from_data(shape(), data(), requires_grad());
}

bool Tensor::all_finite() const {
    for (double v : data())
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::backward() const {
    auto* root = node();
    check_contract(root->data.size() == 1, "backward: loss must be a scalar");
    check_contract(root->requires_grad,
                   "backward: tensor has no recorded dependencies on any parameter");

    // Post-order DFS over the tape; child-first order, reversed below.
    std::vector<detail::TensorNode*> order;
    std::unordered_set<detail::TensorNode*> seen;
    struct Frame {
        detail::TensorNode* n;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({root, 0});
    seen.insert(root);
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.n->parents.size()) {
            detail::TensorNode* p = f.n->parents[f.next_parent++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }

    ensure_grad(*root)[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }
}

// Single entry point for creating op results. Records the tape edge only when
// grad mode is on and some input needs gradients.
Tensor make_op(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
               std::function<void(detail::TensorNode&)> backward_fn) {
    auto n = std::make_shared<detail::TensorNode>();
    const auto expected = numel(shape);
    check_shape(expected == static_cast<std::int64_t>(data.size()), "internal: op result shape mismatch");
    n->shape = std::move(shape);
    n->data = std::move(data);
    bool needs = false;
    if (g_grad_enabled) {
        for (const auto& p : parents)
            if (p.requires_grad()) needs = true;
    }
    if (needs) {
        n->requires_grad = true;
        n->parents.reserve(parents.size());
        for (auto& p : parents) n->parents.push_back(p.node_ptr());
        n->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(n));
}

// ---------------------------------------------------------------------------
// elementwise

Tensor add(const Tensor& a, const Tensor& b) {
    check_shape(a.shape() == b.shape(),
                "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<double> out(a.data());
    const auto& bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](detail::TensorNode& n) {
        const auto& g = n.grad;
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (wants_grad(pa)) {
            auto& ga = ensure_grad(pa);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (wants_grad(pb)) {
            auto& gb = ensure_grad(pb);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_shape(a.shape() == b.shape(),
                "sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<double> out(a.data());
    const auto& bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](detail::TensorNode& n) {
        const auto& g = n.grad;
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (wants_grad(pa)) {
            auto& ga = ensure_grad(pa);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (wants_grad(pb)) {
            auto& gb = ensure_grad(pb);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_shape(a.shape() == b.shape(),
                "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<double> out(a.data());
    const auto& bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](detail::TensorNode& n) {
        const auto& g = n.grad;
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (wants_grad(pa)) {
            auto& ga = ensure_grad(pa);
            const auto& bd2 = pb.data;
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bd2[i];
        }
        if (wants_grad(pb)) {
            auto& gb = ensure_grad(pb);
            const auto& ad2 = pa.data;
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ad2[i];
        }
    });
}

Tensor add_scalar(const Tensor& a, double c) {
    std::vector<double> out(a.data());
    for (auto& v : out) v += c;
    return make_op(a.shape(), std::move(out), {a}, [](detail::TensorNode& n) {
        auto& pa = *n.parents[0];
        if (!wants_grad(pa)) return;
        auto& ga = ensure_grad(pa);
        for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i];
    });
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.data());
    for (auto& v : out) v *= c;
    return make_op(a.shape(), std::move(out), {a}, [c](detail::TensorNode& n) {
        auto& pa = *n.parents[0];
        if (!wants_grad(pa)) return;
        auto& ga = ensure_grad(pa);
        for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += c * n.grad[i];
    });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor add_bias(const Tensor& x, const Tensor& b) {
    check_shape(x.ndim() == 2 && b.ndim() == 1 && x.dim(1) == b.dim(0),
                "add_bias: need [m x n] and [n], got " + shape_str(x.shape()) + " and " +
                    shape_str(b.shape()));
    const auto m = x.dim(0), nn = x.dim(1);
    std::vector<double> out(x.data());
    const auto& bd = b.data();
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < nn; ++j) out[static_cast<std::size_t>(i * nn + j)] += bd[static_cast<std::size_t>(j)];
    return make_op(x.shape(), std::move(out), {x, b}, [m, nn](detail::TensorNode& n) {
        auto& px = *n.parents[0];
        auto& pb = *n.parents[1];
        const auto& g = n.grad;
        if (wants_grad(px)) {
            auto& gx = ensure_grad(px);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (wants_grad(pb)) {
            auto& gb = ensure_grad(pb);
            for (std::int64_t i = 0; i < m; ++i) {
                const double* grow = g.data() + i * nn;
                for (std::int64_t j = 0; j < nn; ++j) gb[static_cast<std::size_t>(j)] += grow[j];
            }
        }
    });
}

Tensor add_broadcast_scalar(const Tensor& x, const Tensor& s) {
    check_shape(s.size() == 1, "add_broadcast_scalar: s must be a single element");
    std::vector<double> out(x.data());
    const double sv = s.at(0);
    for (auto& v : out) v += sv;
    return make_op(x.shape(), std::move(out), {x, s}, [](detail::TensorNode& n) {
        auto& px = *n.parents[0];
        auto& ps = *n.parents[1];
        if (wants_grad(px)) {
            auto& gx = ensure_grad(px);
            for (std::size_t i = 0; i < n.grad.size(); ++i) gx[i] += n.grad[i];
        }
        if (wants_grad(ps)) {
            auto& gs = ensure_grad(ps);
            for (std::size_t i = 0; i < n.grad.size(); ++i) gs[0] += n.grad[i];
        }
    });
}

Tensor sigmoid(const Tensor& x) {
    std::vector<double> out(x.data());
    for (auto& v : out) {
        if (v >= 0.0) {
            v = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            v = e / (1.0 + e);
        }
    }
    return make_op(x.shape(), std::move(out), {x}, [](detail::TensorNode& n) {
        auto& px = *n.parents[0];
        if (!wants_grad(px)) return;
        auto& gx = ensure_grad(px);
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            const double s = n.data[i];
            gx[i] += n.grad[i] * s * (1.0 - s);
        }
    });
}

Tensor relu(const Tensor& x) {
    std::vector<double> out(x.data());
    for (auto& v : out) v = v > 0.0 ? v : 0.0;
    return make_op(x.shape(), std::move(out), {x}, [](detail::TensorNode& n) {
        auto& px = *n.parents[0];
        if (!wants_grad(px)) return;
        auto& gx = ensure_grad(px);
        const auto& xd = px.data;
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            if (xd[i] > 0.0) gx[i] += n.grad[i];
    });
}

Tensor gelu(const Tensor& x) {
    std::vector<double> out(x.data());
    for (auto& v : out) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    return make_op(x.shape(), std::move(out), {x}, [](detail::TensorNode& n) {
        auto& px = *n.parents[0];
        if (!wants_grad(px)) return;
        auto& gx = ensure_grad(px);
        const auto& xd = px.data;
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            const double v = xd[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
            gx[i] += n.grad[i] * (cdf + v * pdf);
        }
    });
}

// ---------------------------------------------------------------------------
// linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_shape(a.ndim() == 2 && b.ndim() == 2 && a.dim(1) == b.dim(0),
                "matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                    shape_str(b.shape()));
    const std::int64_t m = a.dim(0), k = a.dim(1), nn = b.dim(1);
    std::vector<double> out(static_cast<std::size_t>(m * nn), 0.0);
    {
        const double* A = a.data().data();
        const double* B = b.data().data();
        double* C = out.data();
        for (std::int64_t i = 0; i < m; ++i) {
            double* crow = C + i * nn;
            const double* arow = A + i * k;
            for (std::int64_t kk = 0; kk < k; ++kk) {
                const double av = arow[kk];
                const double* brow = B + kk * nn;
                for (std::int64_t j = 0; j < nn; ++j) crow[j] += av * brow[j];
            }
        }
    }
    return make_op({m, nn}, std::move(out), {a, b}, [m, k, nn](detail::TensorNode& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        const double* G = n.grad.data();
        if (wants_grad(pa)) {
            // dA = dC · B^T; materialize B^T so the inner loop stays contiguous.
            std::vector<double> bt(static_cast<std::size_t>(nn * k));
            const double* B = pb.data.data();
            for (std::int64_t kk = 0; kk < k; ++kk)
                for (std::int64_t j = 0; j < nn; ++j)
                    bt[static_cast<std::size_t>(j * k + kk)] = B[kk * nn + j];
            auto& ga = ensure_grad(pa);
            for (std::int64_t i = 0; i < m; ++i) {
                double* garow = ga.data() + i * k;
                const double* grow = G + i * nn;
                for (std::int64_t j = 0; j < nn; ++j) {
                    const double gv = grow[j];
                    const double* btrow = bt.data() + j * k;
                    for (std::int64_t kk = 0; kk < k; ++kk) garow[kk] += gv * btrow[kk];
                }
            }
        }
        if (wants_grad(pb)) {
            // dB = A^T · dC
            auto& gb = ensure_grad(pb);
            const double* A = pa.data.data();
            for (std::int64_t i = 0; i < m; ++i) {
                const double* arow = A + i * k;
                const double* grow = G + i * nn;
                for (std::int64_t kk = 0; kk < k; ++kk) {
                    const double av = arow[kk];
                    double* gbrow = gb.data() + kk * nn;
                    for (std::int64_t j = 0; j < nn; ++j) gbrow[j] += av * grow[j];
                }
            }
        }
    });
}

Tensor matvec(const Tensor& x, const Tensor& v) {
    check_shape(x.ndim() == 2 && v.ndim() == 1 && x.dim(1) == v.dim(0),
                "matvec: incompatible shapes " + shape_str(x.shape()) + " and " +
                    shape_str(v.shape()));
    const std::int64_t m = x.dim(0), nn = x.dim(1);
    std::vector<double> out(static_cast<std::size_t>(m), 0.0);
    for (std::int64_t i = 0; i < m; ++i) {
        const double* row = x.data().data() + i * nn;
        double s = 0.0;
        for (std::int64_t j = 0; j < nn; ++j) s += row[j] * v.data()[static_cast<std::size_t>(j)];
        out[static_cast<std::size_t>(i)] = s;
    }
    return make_op({m}, std::move(out), {x, v}, [m, nn](detail::TensorNode& n) {
        auto& px = *n.parents[0];
        auto& pv = *n.parents[1];
        const auto& g = n.grad;
        if (wants_grad(px)) {
            auto& gx = ensure_grad(px);
            const auto& vd = pv.data;
            for (std::int64_t i = 0; i < m; ++i) {
                const double gv = g[static_cast<std::size_t>(i)];
                double* grow = gx.data() + i * nn;
                for (std::int64_t j = 0; j < nn; ++j) grow[j] += gv * vd[static_cast<std::size_t>(j)];
            }
        }
        if (wants_grad(pv)) {
            auto& gv = ensure_grad(pv);
            const auto& xd = px.data;
            for (std::int64_t i = 0; i < m; ++i) {
                const double gi = g[static_cast<std::size_t>(i)];
                const double* xrow = xd.data() + i * nn;
                for (std::int64_t j = 0; j < nn; ++j) gv[static_cast<std::size_t>(j)] += gi * xrow[j];
            }
        }
    });
}

Tensor dot(const Tensor& a, const Tensor& b) {
    check_shape(a.ndim() == 1 && b.ndim() == 1 && a.dim(0) == b.dim(0),
                "dot: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    double s = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) s += a.data()[i] * b.data()[i];
    return make_op({1}, {s}, {a, b}, [](detail::TensorNode& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        const double g = n.grad[0];
        if (wants_grad(pa)) {
            auto& ga = ensure_grad(pa);
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * pb.data[i];
        }
        if (wants_grad(pb)) {
            auto& gb = ensure_grad(pb);
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * pa.data[i];
        }
    });
}

Tensor transpose(const Tensor& a) {
    check_shape(a.ndim() == 2, "transpose: need 2-D tensor, got " + shape_str(a.shape()));
    const std::int64_t m = a.dim(0), nn = a.dim(1);
    std::vector<double> out(a.data().size());
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < nn; ++j)
            out[static_cast<std::size_t>(j * m + i)] = a.data()[static_cast<std::size_t>(i * nn + j)];
    return make_op({nn, m}, std::move(out), {a}, [m, nn](detail::TensorNode& n) {
        auto& pa = *n.parents[0];
        if (!wants_grad(pa)) return;
        auto& ga = ensure_grad(pa);
        for (std::int64_t j = 0; j < nn; ++j)
            for (std::int64_t i = 0; i < m; ++i)
                ga[static_cast<std::size_t>(i * nn + j)] += n.grad[static_cast<std::size_t>(j * m + i)];
    });
}

Tensor weighted_row_sum(const Tensor& x, const Tensor& w) {
    check_shape(x.ndim() == 2 && w.ndim() == 1 && x.dim(0) == w.dim(0),
                "weighted_row_sum: incompatible shapes " + shape_str(x.shape()) + " and " +
                    shape_str(w.shape()));
    const std::int64_t t = x.dim(0), d = x.dim(1);
    std::vector<double> out(static_cast<std::size_t>(d), 0.0);
    for (std::int64_t i = 0; i < t; ++i) {
        const double wi = w.data()[static_cast<std::size_t>(i)];
        const double* row = x.data().data() + i * d;
        for (std::int64_t j = 0; j < d; ++j) out[static_cast<std::size_t>(j)] += wi * row[j];
    }
    return make_op({d}, std::move(out), {x, w}, [t, d](detail::TensorNode& n) {
        auto& px = *n.parents[0];
        auto& pw = *n.parents[1];
        const auto& g = n.grad;
        if (wants_grad(px)) {
            auto& gx = ensure_grad(px);
            for (std::int64_t i = 0; i < t; ++i) {
                const double wi = pw.data[static_cast<std::size_t>(i)];
                double* grow = gx.data() + i * d;
                for (std::int64_t j = 0; j < d; ++j) grow[j] += wi * g[static_cast<std::size_t>(j)];
            }
        }
        if (wants_grad(pw)) {
            auto& gw = ensure_grad(pw);
            for (std::int64_t i = 0; i < t; ++i) {
                const double* xrow = px.data.data() + i * d;
                double s = 0.0;
                for (std::int64_t j = 0; j < d; ++j) s += xrow[j] * g[static_cast<std::size_t>(j)];
                gw[static_cast<std::size_t>(i)] += s;
            }
        }
    });
}

// ---------------------------------------------------------------------------
// softmax family

namespace {

// softmax over a contiguous strided slice; writes into out with same layout.
void softmax_slice(const double* x, double* y, std::int64_t n, std::int64_t stride) {
    double mx = x[0];
    for (std::int64_t i = 1; i < n; ++i) mx = std::max(mx, x[i * stride]);
    double z = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double e = std::exp(x[i * stride] - mx);
        y[i * stride] = e;
        z += e;
    }
    const double inv = 1.0 / z;
    for (std::int64_t i = 0; i < n; ++i) y[i * stride] *= inv;
}

void softmax_slice_backward(const double* y, const double* gy, double* gx, std::int64_t n,
                            std::int64_t stride) {
    double dotp = 0.0;
    for (std::int64_t i = 0; i < n; ++i) dotp += gy[i * stride] * y[i * stride];
    for (std::int64_t i = 0; i < n; ++i)
        gx[i * stride] += y[i * stride] * (gy[i * stride] - dotp);
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
    check_shape(x.ndim() == 1 || x.ndim() == 2, "softmax: need 1-D or 2-D tensor");
    check_shape(axis >= 0 && axis < x.ndim(), "softmax: axis out of range");
    std::vector<double> out(x.data().size());
    const std::int64_t rows = x.ndim() == 2 ? x.dim(0) : 1;
    const std::int64_t cols = x.ndim() == 2 ? x.dim(1) : x.dim(0);
    const bool along_cols = (x.ndim() == 1) || axis == 1;
    if (along_cols) {
        for (std::int64_t i = 0; i < rows; ++i)
            softmax_slice(x.data().data() + i * cols, out.data() + i * cols, cols, 1);
    } else {
        for (std::int64_t j = 0; j < cols; ++j)
            softmax_slice(x.data().data() + j, out.data() + j, rows, cols);
    }
    return make_op(x.shape(), std::move(out), {x},
                   [rows, cols, along_cols](detail::TensorNode& n) {
                       auto& px = *n.parents[0];
                       if (!wants_grad(px)) return;
                       auto& gx = ensure_grad(px);
                       if (along_cols) {
                           for (std::int64_t i = 0; i < rows; ++i)
                               softmax_slice_backward(n.data.data() + i * cols, n.grad.data() + i * cols,
                                                      gx.data() + i * cols, cols, 1);
                       } else {
                           for (std::int64_t j = 0; j < cols; ++j)
                               softmax_slice_backward(n.data.data() + j, n.grad.data() + j,
                                                      gx.data() + j, rows, cols);
                       }
                   });
}

Tensor causal_masked_softmax(const Tensor& scores) {
    check_shape(scores.ndim() == 2 && scores.dim(0) == scores.dim(1),
                "causal_masked_softmax: need square matrix, got " + shape_str(scores.shape()));
    const std::int64_t t = scores.dim(0);
    std::vector<double> out(scores.data().size(), 0.0);
    for (std::int64_t i = 0; i < t; ++i)
        softmax_slice(scores.data().data() + i * t, out.data() + i * t, i + 1, 1);
    return make_op(scores.shape(), std::move(out), {scores}, [t](detail::TensorNode& n) {
        auto& px = *n.parents[0];
        if (!wants_grad(px)) return;
        auto& gx = ensure_grad(px);
        for (std::int64_t i = 0; i < t; ++i)
            softmax_slice_backward(n.data.data() + i * t, n.grad.data() + i * t, gx.data() + i * t,
                                   i + 1, 1);
    });
}

Tensor masked_softmax(const Tensor& logits, const std::vector<std::uint8_t>& mask) {
    check_shape(logits.ndim() == 1, "masked_softmax: need 1-D tensor");
    check_shape(static_cast<std::size_t>(logits.dim(0)) == mask.size(),
                "masked_softmax: mask length mismatch");
    std::vector<std::int64_t> idx;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) idx.push_back(static_cast<std::int64_t>(i));
    check(!idx.empty(), "masked_softmax: empty mask");

    std::vector<double> out(logits.data().size(), 0.0);
    double mx = logits.data()[static_cast<std::size_t>(idx[0])];
    for (auto i : idx) mx = std::max(mx, logits.data()[static_cast<std::size_t>(i)]);
    double z = 0.0;
    for (auto i : idx) {
        const double e = std::exp(logits.data()[static_cast<std::size_t>(i)] - mx);
        out[static_cast<std::size_t>(i)] = e;
        z += e;
    }
    for (auto i : idx) out[static_cast<std::size_t>(i)] /= z;
    return make_op(logits.shape(), std::move(out), {logits}, [idx](detail::TensorNode& n) {
        auto& px = *n.parents[0];
        if (!wants_grad(px)) return;
        auto& gx = ensure_grad(px);
        double dotp = 0.0;
        for (auto i : idx) dotp += n.grad[static_cast<std::size_t>(i)] * n.data[static_cast<std::size_t>(i)];
        for (auto i : idx)
            gx[static_cast<std::size_t>(i)] +=
                n.data[static_cast<std::size_t>(i)] * (n.grad[static_cast<std::size_t>(i)] - dotp);
    });
}

// ---------------------------------------------------------------------------
// reductions

Tensor sum_all(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    return make_op({1}, {s}, {x}, [](detail::TensorNode& n) {
        auto& px = *n.parents[0];
        if (!wants_grad(px)) return;
        auto& gx = ensure_grad(px);
        const double g = n.grad[0];
        for (auto& v : gx) v += g;
    });
}

Tensor mean_all(const Tensor& x) {
    check_shape(!x.data().empty(), "mean_all: empty tensor");
    double s = 0.0;
    for (double v : x.data()) s += v;
    const double inv = 1.0 / static_cast<double>(x.data().size());
    return make_op({1}, {s * inv}, {x}, [inv](detail::TensorNode& n) {
        auto& px = *n.parents[0];
        if (!wants_grad(px)) return;
        auto& gx = ensure_grad(px);
        const double g = n.grad[0] * inv;
        for (auto& v : gx) v += g;
    });
}

Tensor masked_mean(const Tensor& x, const std::vector<std::uint8_t>& mask) {
    check_shape(x.ndim() == 1 && static_cast<std::size_t>(x.dim(0)) == mask.size(),
                "masked_mean: need 1-D tensor matching mask");
    std::int64_t m = 0;
    double s = 0.0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) {
            s += x.data()[i];
            ++m;
        }
    }
    check(m > 0, "masked_mean: empty mask");
    const double inv = 1.0 / static_cast<double>(m);
    auto mask_copy = mask;
    return make_op({1}, {s * inv}, {x}, [inv, mask_copy](detail::TensorNode& n) {
        auto& px = *n.parents[0];
        if (!wants_grad(px)) return;
        auto& gx = ensure_grad(px);
        const double g = n.grad[0] * inv;
        for (std::size_t i = 0; i < mask_copy.size(); ++i)
            if (mask_copy[i]) gx[i] += g;
    });
}

Tensor sum_scalars(const std::vector<Tensor>& xs) {
    check(!xs.empty(), "sum_scalars: empty input");
    double s = 0.0;
    std::vector<Tensor> parents;
    parents.reserve(xs.size());
    for (const auto& x : xs) {
        check_shape(x.size() == 1, "sum_scalars: all inputs must be scalars");
        s += x.item();
        parents.push_back(x);
    }
    return make_op({1}, {s}, std::move(parents), [](detail::TensorNode& n) {
        const double g = n.grad[0];
        for (auto& p : n.parents)
            if (wants_grad(*p)) ensure_grad(*p)[0] += g;
    });
}

// ---------------------------------------------------------------------------
// shape ops

Tensor slice_cols(const Tensor& x, std::int64_t c0, std::int64_t c1) {
    check_shape(x.ndim() == 2, "slice_cols: need 2-D tensor");
    check_shape(0 <= c0 && c0 < c1 && c1 <= x.dim(1), "slice_cols: bad column range");
    const std::int64_t m = x.dim(0), nn = x.dim(1), w = c1 - c0;
    std::vector<double> out(static_cast<std::size_t>(m * w));
    for (std::int64_t i = 0; i < m; ++i)
        std::copy_n(x.data().data() + i * nn + c0, w, out.data() + i * w);
    return make_op({m, w}, std::move(out), {x}, [m, nn, c0, w](detail::TensorNode& n) {
        auto& px = *n.parents[0];
        if (!wants_grad(px)) return;
        auto& gx = ensure_grad(px);
        for (std::int64_t i = 0; i < m; ++i) {
            const double* grow = n.grad.data() + i * w;
            double* dst = gx.data() + i * nn + c0;
            for (std::int64_t j = 0; j < w; ++j) dst[j] += grow[j];
        }
    });
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
    check(!xs.empty(), "concat_cols: empty input");
    const std::int64_t m = xs[0].dim(0);
    std::int64_t total = 0;
    for (const auto& x : xs) {
        check_shape(x.ndim() == 2 && x.dim(0) == m, "concat_cols: row mismatch");
        total += x.dim(1);
    }
    std::vector<double> out(static_cast<std::size_t>(m * total));
    std::vector<std::int64_t> offs;
    std::int64_t off = 0;
    for (const auto& x : xs) {
        offs.push_back(off);
        const std::int64_t w = x.dim(1);
        for (std::int64_t i = 0; i < m; ++i)
            std::copy_n(x.data().data() + i * w, w, out.data() + i * total + off);
        off += w;
    }
    std::vector<Tensor> parents(xs.begin(), xs.end());
    return make_op({m, total}, std::move(out), std::move(parents),
                   [m, total, offs](detail::TensorNode& n) {
                       for (std::size_t p = 0; p < n.parents.size(); ++p) {
                           auto& pp = *n.parents[p];
                           if (!wants_grad(pp)) continue;
                           auto& gp = ensure_grad(pp);
                           const std::int64_t w = pp.shape[1];
                           for (std::int64_t i = 0; i < m; ++i) {
                               const double* src = n.grad.data() + i * total + offs[p];
                               double* dst = gp.data() + i * w;
                               for (std::int64_t j = 0; j < w; ++j) dst[j] += src[j];
                           }
                       }
                   });
}

Tensor slice_rows(const Tensor& x, std::int64_t r0, std::int64_t r1) {
    check_shape(x.ndim() == 2, "slice_rows: need 2-D tensor");
    check_shape(0 <= r0 && r0 < r1 && r1 <= x.dim(0), "slice_rows: bad row range");
    const std::int64_t nn = x.dim(1), h = r1 - r0;
    std::vector<double> out(x.data().begin() + r0 * nn, x.data().begin() + r1 * nn);
    return make_op({h, nn}, std::move(out), {x}, [r0, nn, h](detail::TensorNode& n) {
        auto& px = *n.parents[0];
        if (!wants_grad(px)) return;
        auto& gx = ensure_grad(px);
        for (std::int64_t i = 0; i < h; ++i) {
            const double* src = n.grad.data() + i * nn;
            double* dst = gx.data() + (r0 + i) * nn;
            for (std::int64_t j = 0; j < nn; ++j) dst[j] += src[j];
        }
    });
}

Tensor concat_rows(const std::vector<Tensor>& xs) {
    check(!xs.empty(), "concat_rows: empty input");
    const std::int64_t nn = xs[0].dim(1);
    std::int64_t total = 0;
    for (const auto& x : xs) {
        check_shape(x.ndim() == 2 && x.dim(1) == nn, "concat_rows: column mismatch");
        total += x.dim(0);
    }
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(total * nn));
    std::vector<std::int64_t> offs;
    std::int64_t off = 0;
    for (const auto& x : xs) {
        offs.push_back(off);
        out.insert(out.end(), x.data().begin(), x.data().end());
        off += x.dim(0);
    }
    std::vector<Tensor> parents(xs.begin(), xs.end());
    return make_op({total, nn}, std::move(out), std::move(parents),
                   [nn, offs](detail::TensorNode& n) {
                       for (std::size_t p = 0; p < n.parents.size(); ++p) {
                           auto& pp = *n.parents[p];
                           if (!wants_grad(pp)) continue;
                           auto& gp = ensure_grad(pp);
                           const std::size_t count = pp.data.size();
                           const double* src = n.grad.data() + offs[p] * nn;
                           for (std::size_t j = 0; j < count; ++j) gp[j] += src[j];
                       }
                   });
}

Tensor row_vec(const Tensor& x, std::int64_t i) {
    check_shape(x.ndim() == 2, "row_vec: need 2-D tensor");
    check_shape(0 <= i && i < x.dim(0), "row_vec: row out of range");
    const std::int64_t nn = x.dim(1);
    std::vector<double> out(x.data().begin() + i * nn, x.data().begin() + (i + 1) * nn);
    return make_op({nn}, std::move(out), {x}, [i, nn](detail::TensorNode& n) {
        auto& px = *n.parents[0];
        if (!wants_grad(px)) return;
        auto& gx = ensure_grad(px);
        double* dst = gx.data() + i * nn;
        for (std::int64_t j = 0; j < nn; ++j) dst[j] += n.grad[static_cast<std::size_t>(j)];
    });
}

// ---------------------------------------------------------------------------
// nn ops

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
    check_shape(table.ndim() == 2, "embedding: table must be 2-D");
    const std::int64_t v = table.dim(0), d = table.dim(1);
    for (int id : ids)
        check_input(id >= 0 && id < v, "embedding: token id " + std::to_string(id) + " out of range");
    const std::int64_t t = static_cast<std::int64_t>(ids.size());
    std::vector<double> out(static_cast<std::size_t>(t * d));
    for (std::int64_t i = 0; i < t; ++i)
        std::copy_n(table.data().data() + static_cast<std::int64_t>(ids[static_cast<std::size_t>(i)]) * d,
                    d, out.data() + i * d);
    auto ids_copy = ids;
    return make_op({t, d}, std::move(out), {table}, [ids_copy, d](detail::TensorNode& n) {
        auto& pt = *n.parents[0];
        if (!wants_grad(pt)) return;
        auto& gt = ensure_grad(pt);
        for (std::size_t i = 0; i < ids_copy.size(); ++i) {
            const double* src = n.grad.data() + static_cast<std::int64_t>(i) * d;
            double* dst = gt.data() + static_cast<std::int64_t>(ids_copy[i]) * d;
            for (std::int64_t j = 0; j < d; ++j) dst[j] += src[j];
        }
    });
}

Tensor rmsnorm(const Tensor& x, const Tensor& gain, double eps) {
    check_shape(x.ndim() == 2 && gain.ndim() == 1 && x.dim(1) == gain.dim(0),
                "rmsnorm: need [t x d] and [d]");
    const std::int64_t t = x.dim(0), d = x.dim(1);
    std::vector<double> out(x.data().size());
    std::vector<double> inv_rms(static_cast<std::size_t>(t));
    for (std::int64_t i = 0; i < t; ++i) {
        const double* row = x.data().data() + i * d;
        double ss = 0.0;
        for (std::int64_t j = 0; j < d; ++j) ss += row[j] * row[j];
        const double inv = 1.0 / std::sqrt(ss / static_cast<double>(d) + eps);
        inv_rms[static_cast<std::size_t>(i)] = inv;
        double* orow = out.data() + i * d;
        for (std::int64_t j = 0; j < d; ++j) orow[j] = row[j] * inv * gain.data()[static_cast<std::size_t>(j)];
    }
    return make_op(x.shape(), std::move(out), {x, gain}, [t, d, inv_rms](detail::TensorNode& n) {
        auto& px = *n.parents[0];
        auto& pg = *n.parents[1];
        const auto& g = n.grad;
        for (std::int64_t i = 0; i < t; ++i) {
            const double inv = inv_rms[static_cast<std::size_t>(i)];
            const double* xrow = px.data.data() + i * d;
            const double* grow = g.data() + i * d;
            if (wants_grad(pg)) {
                auto& gg = ensure_grad(pg);
                for (std::int64_t j = 0; j < d; ++j) gg[static_cast<std::size_t>(j)] += grow[j] * xrow[j] * inv;
            }
            if (wants_grad(px)) {
                auto& gx = ensure_grad(px);
                const auto& gd = pg.data;
                double s = 0.0;
                for (std::int64_t j = 0; j < d; ++j) s += grow[j] * gd[static_cast<std::size_t>(j)] * xrow[j];
                s *= inv * inv / static_cast<double>(d);
                double* gxrow = gx.data() + i * d;
                for (std::int64_t j = 0; j < d; ++j)
                    gxrow[j] += inv * (grow[j] * gd[static_cast<std::size_t>(j)] - xrow[j] * s);
            }
        }
    });
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    check_shape(x.ndim() == 2 && gain.ndim() == 1 && bias.ndim() == 1 && x.dim(1) == gain.dim(0) &&
                    x.dim(1) == bias.dim(0),
                "layernorm: need [t x d], [d], [d]");
    const std::int64_t t = x.dim(0), d = x.dim(1);
    std::vector<double> out(x.data().size());
    std::vector<double> xhat(x.data().size());
    std::vector<double> inv_std(static_cast<std::size_t>(t));
    for (std::int64_t i = 0; i < t; ++i) {
        const double* row = x.data().data() + i * d;
        double mu = 0.0;
        for (std::int64_t j = 0; j < d; ++j) mu += row[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::int64_t j = 0; j < d; ++j) {
            const double c = row[j] - mu;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(i)] = inv;
        for (std::int64_t j = 0; j < d; ++j) {
            const double xh = (row[j] - mu) * inv;
            xhat[static_cast<std::size_t>(i * d + j)] = xh;
            out[static_cast<std::size_t>(i * d + j)] =
                xh * gain.data()[static_cast<std::size_t>(j)] + bias.data()[static_cast<std::size_t>(j)];
        }
    }
    return make_op(x.shape(), std::move(out), {x, gain, bias},
                   [t, d, xhat, inv_std](detail::TensorNode& n) {
                       auto& px = *n.parents[0];
                       auto& pg = *n.parents[1];
                       auto& pb = *n.parents[2];
                       const auto& g = n.grad;
                       for (std::int64_t i = 0; i < t; ++i) {
                           const double* grow = g.data() + i * d;
                           const double* xh = xhat.data() + i * d;
                           if (wants_grad(pg)) {
                               auto& gg = ensure_grad(pg);
                               for (std::int64_t j = 0; j < d; ++j) gg[static_cast<std::size_t>(j)] += grow[j] * xh[j];
                           }
                           if (wants_grad(pb)) {
                               auto& gb = ensure_grad(pb);
                               for (std::int64_t j = 0; j < d; ++j) gb[static_cast<std::size_t>(j)] += grow[j];
                           }
                           if (wants_grad(px)) {
                               auto& gx = ensure_grad(px);
                               const auto& gd = pg.data;
                               double m1 = 0.0, m2 = 0.0;
                               for (std::int64_t j = 0; j < d; ++j) {
                                   const double dxh = grow[j] * gd[static_cast<std::size_t>(j)];
                                   m1 += dxh;
                                   m2 += dxh * xh[j];
                               }
                               m1 /= static_cast<double>(d);
                               m2 /= static_cast<double>(d);
                               const double inv = inv_std[static_cast<std::size_t>(i)];
                               double* gxrow = gx.data() + i * d;
                               for (std::int64_t j = 0; j < d; ++j) {
                                   const double dxh = grow[j] * gd[static_cast<std::size_t>(j)];
                                   gxrow[j] += inv * (dxh - m1 - xh[j] * m2);
                               }
                           }
                       }
                   });
}

// ---------------------------------------------------------------------------
// losses

Tensor cross_entropy_lm(const Tensor& logits, const std::vector<int>& targets,
                        const std::vector<std::uint8_t>& mask) {
    check_shape(logits.ndim() == 2, "cross_entropy_lm: logits must be [t x v]");
    const std::int64_t t = logits.dim(0), v = logits.dim(1);
    check_shape(static_cast<std::int64_t>(targets.size()) == t,
                "cross_entropy_lm: targets length mismatch");
    check_shape(mask.empty() || static_cast<std::int64_t>(mask.size()) == t,
                "cross_entropy_lm: mask length mismatch");
    std::vector<std::int64_t> rows;
    for (std::int64_t i = 0; i < t; ++i)
        if (mask.empty() || mask[static_cast<std::size_t>(i)]) rows.push_back(i);
    check(!rows.empty(), "cross_entropy_lm: no target positions");
    for (auto i : rows)
        check_input(targets[static_cast<std::size_t>(i)] >= 0 &&
                        targets[static_cast<std::size_t>(i)] < v,
                    "cross_entropy_lm: target index out of range");

    // probs saved for the backward pass (rows in `rows` order).
    std::vector<double> probs(rows.size() * static_cast<std::size_t>(v));
    double loss = 0.0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const double* row = logits.data().data() + rows[r] * v;
        double mx = row[0];
        for (std::int64_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        double* prow = probs.data() + r * static_cast<std::size_t>(v);
        for (std::int64_t j = 0; j < v; ++j) {
            const double e = std::exp(row[j] - mx);
            prow[j] = e;
            z += e;
        }
        const double lse = mx + std::log(z);
        loss += lse - row[targets[static_cast<std::size_t>(rows[r])]];
        const double invz = 1.0 / z;
        for (std::int64_t j = 0; j < v; ++j) prow[j] *= invz;
    }
    const double invm = 1.0 / static_cast<double>(rows.size());
    auto targets_copy = targets;
    return make_op({1}, {loss * invm}, {logits},
                   [rows, probs, targets_copy, v, invm](detail::TensorNode& n) {
                       auto& pl = *n.parents[0];
                       if (!wants_grad(pl)) return;
                       auto& gl = ensure_grad(pl);
                       const double g = n.grad[0] * invm;
                       for (std::size_t r = 0; r < rows.size(); ++r) {
                           const double* prow = probs.data() + r * static_cast<std::size_t>(v);
                           double* grow = gl.data() + rows[r] * v;
                           for (std::int64_t j = 0; j < v; ++j) grow[j] += g * prow[j];
                           grow[targets_copy[static_cast<std::size_t>(rows[r])]] -= g;
                       }
                   });
}

Tensor mse(const Tensor& pred, const Tensor& target) {
    check_shape(pred.shape() == target.shape(),
                "mse: shape mismatch " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
    const std::size_t n = pred.data().size();
    check_shape(n > 0, "mse: empty tensors");
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = pred.data()[i] - target.data()[i];
        s += d * d;
    }
    const double inv = 1.0 / static_cast<double>(n);
    return make_op({1}, {s * inv}, {pred, target}, [inv](detail::TensorNode& nn) {
        auto& pp = *nn.parents[0];
        auto& pt = *nn.parents[1];
        const double g = nn.grad[0] * 2.0 * inv;
        if (wants_grad(pp)) {
            auto& gp = ensure_grad(pp);
            for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g * (pp.data[i] - pt.data[i]);
        }
        if (wants_grad(pt)) {
            auto& gt = ensure_grad(pt);
            for (std::size_t i = 0; i < gt.size(); ++i) gt[i] -= g * (pp.data[i] - pt.data[i]);
        }
    });
}

Tensor kl_from_ref(const Tensor& model_logits, const Tensor& ref_logprob,
                   const std::vector<std::uint8_t>& mask) {
    check_shape(model_logits.shape() == ref_logprob.shape(),
                "kl_from_ref: shape mismatch " + shape_str(model_logits.shape()) + " vs " +
                    shape_str(ref_logprob.shape()));
    check_shape(model_logits.ndim() == 2, "kl_from_ref: need [t x v] logits");
    const std::int64_t t = model_logits.dim(0), v = model_logits.dim(1);
    check_shape(static_cast<std::int64_t>(mask.size()) == t, "kl_from_ref: mask length mismatch");
    std::vector<std::int64_t> rows;
    for (std::int64_t i = 0; i < t; ++i)
        if (mask[static_cast<std::size_t>(i)]) rows.push_back(i);
    check(!rows.empty(), "kl_from_ref: empty mask");

    std::vector<double> q(rows.size() * static_cast<std::size_t>(v));
    double total = 0.0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const double* lrow = model_logits.data().data() + rows[r] * v;
        const double* ref = ref_logprob.data().data() + rows[r] * v;
        double mx = lrow[0];
        for (std::int64_t j = 1; j < v; ++j) mx = std::max(mx, lrow[j]);
        double z = 0.0;
        double* qrow = q.data() + r * static_cast<std::size_t>(v);
        for (std::int64_t j = 0; j < v; ++j) {
            const double e = std::exp(lrow[j] - mx);
            qrow[j] = e;
            z += e;
        }
        const double lse = mx + std::log(z);
        const double invz = 1.0 / z;
        double kl = 0.0;
        for (std::int64_t j = 0; j < v; ++j) {
            qrow[j] *= invz;
            const double p = std::exp(ref[j]);
            kl += p * (ref[j] - (lrow[j] - lse));
        }
        total += kl;
    }
    const double invm = 1.0 / static_cast<double>(rows.size());
    return make_op({1}, {total * invm}, {model_logits, ref_logprob},
                   [rows, q, v, invm](detail::TensorNode& n) {
                       auto& pl = *n.parents[0];
                       auto& pr = *n.parents[1];
                       if (!wants_grad(pl)) return;
                       auto& gl = ensure_grad(pl);
                       const double g = n.grad[0] * invm;
                       for (std::size_t r = 0; r < rows.size(); ++r) {
                           const double* qrow = q.data() + r * static_cast<std::size_t>(v);
                           const double* ref = pr.data.data() + rows[r] * v;
                           double* grow = gl.data() + rows[r] * v;
                           for (std::int64_t j = 0; j < v; ++j)
                               grow[j] += g * (qrow[j] - std::exp(ref[j]));
                       }
                   });
}

Tensor kl_to_ref_reverse(const Tensor& model_logits, const Tensor& ref_logprob,
                         const std::vector<std::uint8_t>& mask) {
    check_shape(model_logits.shape() == ref_logprob.shape(),
                "kl_to_ref_reverse: shape mismatch " + shape_str(model_logits.shape()) + " vs " +
                    shape_str(ref_logprob.shape()));
    check_shape(model_logits.ndim() == 2, "kl_to_ref_reverse: need [t x v] logits");
    const std::int64_t t = model_logits.dim(0), v = model_logits.dim(1);
    check_shape(static_cast<std::int64_t>(mask.size()) == t,
                "kl_to_ref_reverse: mask length mismatch");
    std::vector<std::int64_t> rows;
    for (std::int64_t i = 0; i < t; ++i)
        if (mask[static_cast<std::size_t>(i)]) rows.push_back(i);
    check(!rows.empty(), "kl_to_ref_reverse: empty mask");

    // per masked row: q, log q, and the row KL, all reused in backward
    std::vector<double> q(rows.size() * static_cast<std::size_t>(v));
    std::vector<double> logq(rows.size() * static_cast<std::size_t>(v));
    std::vector<double> row_kl(rows.size());
    double total = 0.0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const double* lrow = model_logits.data().data() + rows[r] * v;
        const double* ref = ref_logprob.data().data() + rows[r] * v;
        double mx = lrow[0];
        for (std::int64_t j = 1; j < v; ++j) mx = std::max(mx, lrow[j]);
        double z = 0.0;
        for (std::int64_t j = 0; j < v; ++j) z += std::exp(lrow[j] - mx);
        const double lse = mx + std::log(z);
        double kl = 0.0;
        double* qrow = q.data() + r * static_cast<std::size_t>(v);
        double* lqrow = logq.data() + r * static_cast<std::size_t>(v);
        for (std::int64_t j = 0; j < v; ++j) {
            lqrow[j] = lrow[j] - lse;
            qrow[j] = std::exp(lqrow[j]);
            kl += qrow[j] * (lqrow[j] - ref[j]);
        }
        row_kl[r] = kl;
        total += kl;
    }
    const double invm = 1.0 / static_cast<double>(rows.size());
    return make_op({1}, {total * invm}, {model_logits, ref_logprob},
                   [rows, q, logq, row_kl, v, invm](detail::TensorNode& n) {
                       auto& pl = *n.parents[0];
                       auto& pr = *n.parents[1];
                       if (!wants_grad(pl)) return;
                       auto& gl = ensure_grad(pl);
                       const double g = n.grad[0] * invm;
                       for (std::size_t r = 0; r < rows.size(); ++r) {
                           const double* qrow = q.data() + r * static_cast<std::size_t>(v);
                           const double* lqrow = logq.data() + r * static_cast<std::size_t>(v);
                           const double* ref = pr.data.data() + rows[r] * v;
                           double* grow = gl.data() + rows[r] * v;
                           for (std::int64_t j = 0; j < v; ++j)
                               grow[j] += g * qrow[j] * ((lqrow[j] - ref[j]) - row_kl[r]);
                       }
                   });
}

Tensor bce(const Tensor& probs, const std::vector<double>& targets) {
    check_shape(probs.ndim() == 1 && probs.data().size() == targets.size(),
                "bce: need matching 1-D prob and target vectors");
    const std::size_t n = targets.size();
    check(n > 0, "bce: empty input");
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double p = std::clamp(probs.data()[i], kProbEps, 1.0 - kProbEps);
        const double y = targets[i];
        loss -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    }
    const double inv = 1.0 / static_cast<double>(n);
    auto targets_copy = targets;
    return make_op({1}, {loss * inv}, {probs}, [targets_copy, inv](detail::TensorNode& nn) {
        auto& pp = *nn.parents[0];
        if (!wants_grad(pp)) return;
        auto& gp = ensure_grad(pp);
        const double g = nn.grad[0] * inv;
        for (std::size_t i = 0; i < gp.size(); ++i) {
            const double p = std::clamp(pp.data[i], kProbEps, 1.0 - kProbEps);
            gp[i] += g * (p - targets_copy[i]) / (p * (1.0 - p));
        }
    });
}

}  // namespace camo
