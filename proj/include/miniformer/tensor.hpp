#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "miniformer/error.hpp"

namespace miniformer {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One node of the define-by-run graph. `inputs` point at the producers of
// this tensor; `backward_fn` reads the pass-local adjoint `adj` and
// accumulates into the inputs' adjoints. Leaves have no inputs.
struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // persistent, accumulated across backward passes
    bool requires_grad = false;

    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::function<void(TensorImpl&)> backward_fn;
    std::vector<double> adj;  // adjoint buffer, valid only inside backward()

    std::size_t numel() const { return data.size(); }
};

}  // namespace detail

// Dense row-major f64 tensor participating in a dynamically recorded
// computation graph. Copies share the underlying buffer (handle semantics).
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t numel() const;
    std::size_t rank() const;
    std::size_t extent(std::size_t axis) const;
    bool requires_grad() const;

    std::span<const double> data() const;
    std::span<double> data();
    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> grad();
    void zero_grad();

    double item() const;
    double at(std::initializer_list<std::size_t> idx) const;

    // Reverse-mode sweep from a scalar root. Gradients of every reachable
    // requires_grad tensor are ACCUMULATED; callers zero between steps.
    void backward();

    std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }
    static Tensor wrap(std::shared_ptr<detail::TensorImpl> impl) { return Tensor(std::move(impl)); }

private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    detail::TensorImpl& ref() const;

    std::shared_ptr<detail::TensorImpl> impl_;
};

namespace detail {

// Builds a graph node for a custom operation. The node is recorded only if
// some input requires grad; otherwise the result is a plain constant.
Tensor make_op(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
               std::function<void(TensorImpl&)> backward_fn);

}  // namespace detail

// --- operations ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);                   // [m,k]x[k,n]
Tensor bmm(const Tensor& a, const Tensor& b);                      // [B,m,k]x[B,k,n]

// Binary elementwise ops accept equal shapes or a rank-1 rhs matching the
// last extent of lhs (bias-add broadcast). No other broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor relu(const Tensor& x);

Tensor softmax(const Tensor& x);  // over the last axis, max-subtracted

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len);
Tensor reshape(const Tensor& x, Shape new_shape);
Tensor transpose(const Tensor& x, std::size_t axis0, std::size_t axis1);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Repeats a [1,n] row `rows` times; backward sums over rows. Used to expand
// learnable initial states to the batch.
Tensor expand_rows(const Tensor& x, std::size_t rows);

// --- parameters ------------------------------------------------------------

// Named trainable tensor; optimizer state attaches by name.
struct Parameter {
    std::string name;
    Tensor tensor;
};

// Owns a model's parameters and their seeded initialization. Names must be
// unique; registration order is the iteration order everywhere (optimizer,
// checkpoints), which keeps runs deterministic.
class ParamRegistry {
public:
    explicit ParamRegistry(std::uint64_t seed) : rng_(seed) {}

    Tensor add_uniform(const std::string& name, Shape shape, double lo, double hi);
    // U(-1/sqrt(fan_in), +1/sqrt(fan_in))
    Tensor add_fanin(const std::string& name, Shape shape, std::size_t fan_in);
    Tensor add_constant(const std::string& name, Shape shape, double value);

    std::span<Parameter> params() { return params_; }
    std::span<const Parameter> params() const { return params_; }
    Tensor find(const std::string& name) const;  // throws IndexError if absent

    void zero_grads();

private:
    Tensor insert(const std::string& name, Shape shape, std::vector<double> values);

    std::vector<Parameter> params_;
    std::mt19937_64 rng_;
};

std::size_t count_params(std::span<const Parameter> params);

}  // namespace miniformer
