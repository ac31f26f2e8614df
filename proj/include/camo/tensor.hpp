#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "camo/common.hpp"
#include "camo/rng.hpp"

namespace camo {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorNode {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // allocated lazily during backward
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;  // accumulates into parents' grads
};

}  // namespace detail

// Dense row-major f64 tensor with reverse-mode autodiff. Value-semantic
// handle over a shared node; the tape is rebuilt on every forward pass.
// Gradient accumulation order is fixed, so runs are bit-reproducible.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node()->shape; }
    std::int64_t dim(int i) const { return node()->shape.at(static_cast<std::size_t>(i)); }
    int ndim() const { return static_cast<int>(node()->shape.size()); }
    std::int64_t size() const { return static_cast<std::int64_t>(node()->data.size()); }

    const std::vector<double>& data() const { return node()->data; }
    std::vector<double>& mutable_data() { return node()->data; }
    double at(std::int64_t i) const { return node()->data[static_cast<std::size_t>(i)]; }

    // Value of a single-element tensor.
    double item() const;

    bool requires_grad() const { return node()->requires_grad; }
    Tensor& set_requires_grad(bool v);

    bool has_grad() const { return !node()->grad.empty(); }
    const std::vector<double>& grad() const;
    void zero_grad();

    // Reverse-mode sweep from a scalar. Populates grad on every
    // requires_grad tensor reachable through the recorded ops.
    void backward() const;

    // Same values, detached from the tape, never requires grad.
    Tensor detach() const;
    // Deep copy of the values (leaf, no history).
    Tensor clone() const;

    bool all_finite() const;

    detail::TensorNode* node() const {
        check(node_ != nullptr, "use of undefined Tensor");
        return node_.get();
    }
    const std::shared_ptr<detail::TensorNode>& node_ptr() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}
    static Tensor make(Shape shape, std::vector<double> data);

    std::shared_ptr<detail::TensorNode> node_;

    friend Tensor make_op(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                          std::function<void(detail::TensorNode&)> backward_fn);
};

// Scoped guard disabling tape recording (inference mode).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

// --- elementwise / arithmetic ------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor scale(const Tensor& a, double c);
Tensor neg(const Tensor& a);
// X[m x n] + row vector b[n], broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& b);
// x + s broadcast, where s is a single-element tensor (gradient flows to both).
Tensor add_broadcast_scalar(const Tensor& x, const Tensor& s);

Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);

// --- linear algebra ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);          // [m x k]·[k x n]
Tensor matvec(const Tensor& x, const Tensor& v);          // [m x n]·[n] -> [m]
Tensor dot(const Tensor& a, const Tensor& b);             // [n]·[n] -> scalar
Tensor transpose(const Tensor& a);                        // 2-D
Tensor weighted_row_sum(const Tensor& x, const Tensor& w);  // w[t]·X[t,:] summed -> [n]

// --- softmax family ----------------------------------------------------------

// Softmax along `axis` of a 1-D or 2-D tensor, max-subtracted for stability.
Tensor softmax(const Tensor& x, int axis);
// Row-wise softmax over positions j <= i of a square score matrix; the upper
// triangle is exactly zero.
Tensor causal_masked_softmax(const Tensor& scores);
// Softmax of a vector restricted to mask!=0 positions; zero elsewhere.
Tensor masked_softmax(const Tensor& logits, const std::vector<std::uint8_t>& mask);

// --- reductions --------------------------------------------------------------

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
// Mean of vector entries where mask!=0.
Tensor masked_mean(const Tensor& x, const std::vector<std::uint8_t>& mask);
// Flat sum of scalar tensors (single tape node).
Tensor sum_scalars(const std::vector<Tensor>& xs);

// --- shape ops ---------------------------------------------------------------

Tensor slice_cols(const Tensor& x, std::int64_t c0, std::int64_t c1);
Tensor concat_cols(const std::vector<Tensor>& xs);
Tensor slice_rows(const Tensor& x, std::int64_t r0, std::int64_t r1);
Tensor concat_rows(const std::vector<Tensor>& xs);
// Row i of a 2-D tensor as a 1-D vector.
Tensor row_vec(const Tensor& x, std::int64_t i);

// --- neural-net ops ----------------------------------------------------------

Tensor embedding(const Tensor& table, const std::vector<int>& ids);
Tensor rmsnorm(const Tensor& x, const Tensor& gain, double eps = 1e-5);
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// --- losses ------------------------------------------------------------------

// Mean negative log-softmax probability of targets. When `mask` is non-empty
// only mask!=0 positions contribute.
Tensor cross_entropy_lm(const Tensor& logits, const std::vector<int>& targets,
                        const std::vector<std::uint8_t>& mask = {});
Tensor mse(const Tensor& pred, const Tensor& target);
// Mean over mask!=0 rows of KL(ref || model). `ref_logprob` rows must be
// log-probabilities; it is treated as a constant.
Tensor kl_from_ref(const Tensor& model_logits, const Tensor& ref_logprob,
                   const std::vector<std::uint8_t>& mask);
// Reverse direction: mean over mask!=0 rows of KL(model || ref).
Tensor kl_to_ref_reverse(const Tensor& model_logits, const Tensor& ref_logprob,
                         const std::vector<std::uint8_t>& mask);
// Mean binary cross-entropy of probabilities in (0,1) against 0/1 targets.
Tensor bce(const Tensor& probs, const std::vector<double>& targets);

}  // namespace camo
