#include "miniformer/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>
#include <utility>

namespace miniformer {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

using detail::TensorImpl;

std::shared_ptr<TensorImpl> new_impl(Shape shape, std::vector<double> data, bool requires_grad) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    return impl;
}

// C[m,n] = A[m,k] * B[k,n]
void mm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    std::fill(c, c + m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,k] += A[m,n] * B[k,n]^T
void mm_abt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
                std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * n;
        double* crow = c + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
            crow[p] += acc;
        }
    }
}

// C[k,n] += A[m,k]^T * B[m,n]
void mm_atb_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

enum class BinMode { same, bias };

BinMode binary_mode(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) return BinMode::same;
    if (b.rank() == 1 && a.rank() >= 1 && a.shape().back() == b.extent(0)) return BinMode::bias;
    throw DimError(std::string(op) + ": shapes not broadcastable: " + shape_str(a.shape()) +
                   " vs " + shape_str(b.shape()));
}

void require_defined(const Tensor& t, const char* op) {
    if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

}  // namespace

// --- Tensor ------------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return Tensor(new_impl(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return Tensor(new_impl(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size())
        throw DimError("tensor: shape " + shape_str(shape) + " does not match data length " +
                       std::to_string(data.size()));
    return Tensor(new_impl(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor(new_impl({1}, {value}, requires_grad));
}

detail::TensorImpl& Tensor::ref() const {
    if (!impl_) throw ContractError("tensor: undefined");
    return *impl_;
}

const Shape& Tensor::shape() const { return ref().shape; }
std::size_t Tensor::numel() const { return ref().data.size(); }
std::size_t Tensor::rank() const { return ref().shape.size(); }

std::size_t Tensor::extent(std::size_t axis) const {
    const auto& s = ref().shape;
    if (axis >= s.size()) throw DimError("tensor: axis " + std::to_string(axis) + " out of rank");
    return s[axis];
}

bool Tensor::requires_grad() const { return ref().requires_grad; }

std::span<const double> Tensor::data() const { return ref().data; }
std::span<double> Tensor::data() { return ref().data; }

bool Tensor::has_grad() const { return ref().grad.size() == ref().data.size(); }

std::span<const double> Tensor::grad() const {
    if (!has_grad()) throw ContractError("tensor: gradient not populated");
    return ref().grad;
}

std::span<double> Tensor::grad() {
    if (!has_grad()) throw ContractError("tensor: gradient not populated");
    return ref().grad;
}

void Tensor::zero_grad() { ref().grad.assign(ref().data.size(), 0.0); }

double Tensor::item() const {
    if (numel() != 1) throw ContractError("tensor: item() on non-scalar shape " + shape_str(shape()));
    return ref().data[0];
}

double Tensor::at(std::initializer_list<std::size_t> idx) const {
    const auto& s = ref().shape;
    if (idx.size() != s.size())
        throw DimError("tensor: index rank " + std::to_string(idx.size()) + " vs shape " +
                       shape_str(s));
    std::size_t off = 0;
    std::size_t axis = 0;
    for (std::size_t i : idx) {
        if (i >= s[axis]) throw IndexError("tensor: index out of range on axis " + std::to_string(axis));
        off = off * s[axis] + i;
        ++axis;
    }
    return ref().data[off];
}

void Tensor::backward() {
    TensorImpl* root = &ref();
    if (root->data.size() != 1)
        throw ContractError("backward: root must be scalar, got shape " + shape_str(root->shape));
    if (!root->requires_grad) return;

    // Post-order over the requires_grad subgraph: inputs precede consumers.
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> seen;
    std::vector<std::pair<TensorImpl*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    seen.insert(root);
    while (!stack.empty()) {
        auto& top = stack.back();
        TensorImpl* node = top.first;
        if (top.second < node->inputs.size()) {
            TensorImpl* in = node->inputs[top.second++].get();
            if (in->requires_grad && !seen.count(in)) {
                seen.insert(in);
                stack.emplace_back(in, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (TensorImpl* n : order) n->adj.assign(n->data.size(), 0.0);
    root->adj[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }
    for (TensorImpl* n : order) {
        if (n->grad.size() != n->data.size()) n->grad.assign(n->data.size(), 0.0);
        for (std::size_t i = 0; i < n->data.size(); ++i) n->grad[i] += n->adj[i];
        n->adj.clear();
        n->adj.shrink_to_fit();
    }
}

namespace detail {

Tensor make_op(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
               std::function<void(TensorImpl&)> backward_fn) {
    if (shape_numel(shape) != data.size())
        throw DimError("make_op: shape " + shape_str(shape) + " does not match data length " +
                       std::to_string(data.size()));
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    bool rg = false;
    for (const Tensor& t : inputs) rg = rg || t.requires_grad();
    impl->requires_grad = rg;
    if (rg) {
        impl->inputs.reserve(inputs.size());
        for (const Tensor& t : inputs) impl->inputs.push_back(t.impl());
        impl->backward_fn = std::move(backward_fn);
    }
    return Tensor::wrap(std::move(impl));
}

}  // namespace detail

// --- matmul / bmm --------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_defined(a, "matmul");
    require_defined(b, "matmul");
    if (a.rank() != 2 || b.rank() != 2)
        throw DimError("matmul: expects rank-2 operands, got " + shape_str(a.shape()) + " x " +
                       shape_str(b.shape()));
    const std::size_t m = a.extent(0), k = a.extent(1), k2 = b.extent(0), n = b.extent(1);
    if (k != k2)
        throw DimError("matmul: inner extents do not match: " + shape_str(a.shape()) + " x " +
                       shape_str(b.shape()));
    std::vector<double> out(m * n);
    mm(a.data().data(), b.data().data(), out.data(), m, k, n);
    return detail::make_op({m, n}, std::move(out), {a, b}, [m, k, n](TensorImpl& self) {
        auto& A = *self.inputs[0];
        auto& B = *self.inputs[1];
        if (A.requires_grad) mm_abt_acc(self.adj.data(), B.data.data(), A.adj.data(), m, n, k);
        if (B.requires_grad) mm_atb_acc(A.data.data(), self.adj.data(), B.adj.data(), m, k, n);
    });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
    require_defined(a, "bmm");
    require_defined(b, "bmm");
    if (a.rank() != 3 || b.rank() != 3)
        throw DimError("bmm: expects rank-3 operands, got " + shape_str(a.shape()) + " x " +
                       shape_str(b.shape()));
    const std::size_t bs = a.extent(0), m = a.extent(1), k = a.extent(2);
    if (b.extent(0) != bs || b.extent(1) != k)
        throw DimError("bmm: incompatible shapes: " + shape_str(a.shape()) + " x " +
                       shape_str(b.shape()));
    const std::size_t n = b.extent(2);
    std::vector<double> out(bs * m * n);
    for (std::size_t i = 0; i < bs; ++i)
        mm(a.data().data() + i * m * k, b.data().data() + i * k * n, out.data() + i * m * n, m, k, n);
    return detail::make_op({bs, m, n}, std::move(out), {a, b}, [bs, m, k, n](TensorImpl& self) {
        auto& A = *self.inputs[0];
        auto& B = *self.inputs[1];
        for (std::size_t i = 0; i < bs; ++i) {
            const double* adj = self.adj.data() + i * m * n;
            if (A.requires_grad)
                mm_abt_acc(adj, B.data.data() + i * k * n, A.adj.data() + i * m * k, m, n, k);
            if (B.requires_grad)
                mm_atb_acc(A.data.data() + i * m * k, adj, B.adj.data() + i * k * n, m, k, n);
        }
    });
}

// --- binary elementwise ---------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    const BinMode mode = binary_mode(a, b, "add");
    const std::size_t n = a.numel();
    const std::size_t last = mode == BinMode::bias ? b.numel() : 0;
    std::vector<double> out(n);
    const auto av = a.data();
    const auto bv = b.data();
    if (mode == BinMode::same) {
        for (std::size_t i = 0; i < n; ++i) out[i] = av[i] + bv[i];
    } else {
        for (std::size_t i = 0; i < n; ++i) out[i] = av[i] + bv[i % last];
    }
    return detail::make_op(a.shape(), std::move(out), {a, b}, [n, last, mode](TensorImpl& self) {
        auto& A = *self.inputs[0];
        auto& B = *self.inputs[1];
        if (A.requires_grad)
            for (std::size_t i = 0; i < n; ++i) A.adj[i] += self.adj[i];
        if (B.requires_grad) {
            if (mode == BinMode::same) {
                for (std::size_t i = 0; i < n; ++i) B.adj[i] += self.adj[i];
            } else {
                for (std::size_t i = 0; i < n; ++i) B.adj[i % last] += self.adj[i];
            }
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    const BinMode mode = binary_mode(a, b, "sub");
    const std::size_t n = a.numel();
    const std::size_t last = mode == BinMode::bias ? b.numel() : 0;
    std::vector<double> out(n);
    const auto av = a.data();
    const auto bv = b.data();
    if (mode == BinMode::same) {
        for (std::size_t i = 0; i < n; ++i) out[i] = av[i] - bv[i];
    } else {
        for (std::size_t i = 0; i < n; ++i) out[i] = av[i] - bv[i % last];
    }
    return detail::make_op(a.shape(), std::move(out), {a, b}, [n, last, mode](TensorImpl& self) {
        auto& A = *self.inputs[0];
        auto& B = *self.inputs[1];
        if (A.requires_grad)
            for (std::size_t i = 0; i < n; ++i) A.adj[i] += self.adj[i];
        if (B.requires_grad) {
            if (mode == BinMode::same) {
                for (std::size_t i = 0; i < n; ++i) B.adj[i] -= self.adj[i];
            } else {
                for (std::size_t i = 0; i < n; ++i) B.adj[i % last] -= self.adj[i];
            }
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    const BinMode mode = binary_mode(a, b, "mul");
    const std::size_t n = a.numel();
    const std::size_t last = mode == BinMode::bias ? b.numel() : 0;
    std::vector<double> out(n);
    const auto av = a.data();
    const auto bv = b.data();
    if (mode == BinMode::same) {
        for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * bv[i];
    } else {
        for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * bv[i % last];
    }
    return detail::make_op(a.shape(), std::move(out), {a, b}, [n, last, mode](TensorImpl& self) {
        auto& A = *self.inputs[0];
        auto& B = *self.inputs[1];
        if (mode == BinMode::same) {
            if (A.requires_grad)
                for (std::size_t i = 0; i < n; ++i) A.adj[i] += self.adj[i] * B.data[i];
            if (B.requires_grad)
                for (std::size_t i = 0; i < n; ++i) B.adj[i] += self.adj[i] * A.data[i];
        } else {
            if (A.requires_grad)
                for (std::size_t i = 0; i < n; ++i) A.adj[i] += self.adj[i] * B.data[i % last];
            if (B.requires_grad)
                for (std::size_t i = 0; i < n; ++i) B.adj[i % last] += self.adj[i] * A.data[i];
        }
    });
}

Tensor scale(const Tensor& a, double factor) {
    require_defined(a, "scale");
    const std::size_t n = a.numel();
    std::vector<double> out(n);
    const auto av = a.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * factor;
    return detail::make_op(a.shape(), std::move(out), {a}, [n, factor](TensorImpl& self) {
        auto& A = *self.inputs[0];
        if (A.requires_grad)
            for (std::size_t i = 0; i < n; ++i) A.adj[i] += self.adj[i] * factor;
    });
}

// --- unary elementwise ----------------------------------------------------------

Tensor sigmoid(const Tensor& x) {
    require_defined(x, "sigmoid");
    const std::size_t n = x.numel();
    std::vector<double> out(n);
    const auto xv = x.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double v = xv[i];
        out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    return detail::make_op(x.shape(), std::move(out), {x}, [n](TensorImpl& self) {
        auto& X = *self.inputs[0];
        if (!X.requires_grad) return;
        for (std::size_t i = 0; i < n; ++i) {
            const double y = self.data[i];
            X.adj[i] += self.adj[i] * y * (1.0 - y);
        }
    });
}

Tensor tanh(const Tensor& x) {
    require_defined(x, "tanh");
    const std::size_t n = x.numel();
    std::vector<double> out(n);
    const auto xv = x.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(xv[i]);
    return detail::make_op(x.shape(), std::move(out), {x}, [n](TensorImpl& self) {
        auto& X = *self.inputs[0];
        if (!X.requires_grad) return;
        for (std::size_t i = 0; i < n; ++i) {
            const double y = self.data[i];
            X.adj[i] += self.adj[i] * (1.0 - y * y);
        }
    });
}

Tensor exp(const Tensor& x) {
    require_defined(x, "exp");
    const std::size_t n = x.numel();
    std::vector<double> out(n);
    const auto xv = x.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(xv[i]);
    return detail::make_op(x.shape(), std::move(out), {x}, [n](TensorImpl& self) {
        auto& X = *self.inputs[0];
        if (!X.requires_grad) return;
        for (std::size_t i = 0; i < n; ++i) X.adj[i] += self.adj[i] * self.data[i];
    });
}

Tensor relu(const Tensor& x) {
    require_defined(x, "relu");
    const std::size_t n = x.numel();
    std::vector<double> out(n);
    const auto xv = x.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    return detail::make_op(x.shape(), std::move(out), {x}, [n](TensorImpl& self) {
        auto& X = *self.inputs[0];
        if (!X.requires_grad) return;
        for (std::size_t i = 0; i < n; ++i)
            if (X.data[i] > 0.0) X.adj[i] += self.adj[i];
    });
}

Tensor softmax(const Tensor& x) {
    require_defined(x, "softmax");
    if (x.rank() < 1 || x.shape().back() < 1)
        throw DimError("softmax: needs a non-empty last axis, got " + shape_str(x.shape()));
    const std::size_t n = x.shape().back();
    const std::size_t slices = x.numel() / n;
    std::vector<double> out(x.numel());
    const auto xv = x.data();
    for (std::size_t s = 0; s < slices; ++s) {
        const double* in = xv.data() + s * n;
        double* o = out.data() + s * n;
        double mx = in[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, in[j]);
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            o[j] = std::exp(in[j] - mx);
            total += o[j];
        }
        for (std::size_t j = 0; j < n; ++j) o[j] /= total;
    }
    return detail::make_op(x.shape(), std::move(out), {x}, [n, slices](TensorImpl& self) {
        auto& X = *self.inputs[0];
        if (!X.requires_grad) return;
        for (std::size_t s = 0; s < slices; ++s) {
            const double* y = self.data.data() + s * n;
            const double* adj = self.adj.data() + s * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += adj[j] * y[j];
            double* xa = X.adj.data() + s * n;
            for (std::size_t j = 0; j < n; ++j) xa[j] += y[j] * (adj[j] - dot);
        }
    });
}

// --- structural ops ------------------------------------------------------------

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw ContractError("concat: no inputs");
    const std::size_t rank = parts[0].rank();
    if (axis >= rank) throw DimError("concat: axis " + std::to_string(axis) + " out of rank");
    Shape out_shape = parts[0].shape();
    std::size_t axis_total = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != rank)
            throw DimError("concat: rank mismatch: " + shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
        for (std::size_t d = 0; d < rank; ++d) {
            if (d != axis && p.shape()[d] != out_shape[d])
                throw DimError("concat: extent mismatch on axis " + std::to_string(d) + ": " +
                               shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
        }
        axis_total += p.shape()[axis];
    }
    out_shape[axis] = axis_total;

    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= out_shape[d];
    for (std::size_t d = axis + 1; d < rank; ++d) inner *= out_shape[d];

    std::vector<std::size_t> block(parts.size());
    for (std::size_t p = 0; p < parts.size(); ++p) block[p] = parts[p].shape()[axis] * inner;
    const std::size_t out_stride = axis_total * inner;

    std::vector<double> out(shape_numel(out_shape));
    for (std::size_t o = 0; o < outer; ++o) {
        double* dst = out.data() + o * out_stride;
        for (std::size_t p = 0; p < parts.size(); ++p) {
            const double* src = parts[p].data().data() + o * block[p];
            std::copy(src, src + block[p], dst);
            dst += block[p];
        }
    }
    return detail::make_op(std::move(out_shape), std::move(out), parts,
                           [outer, block, out_stride](TensorImpl& self) {
                               for (std::size_t o = 0; o < outer; ++o) {
                                   const double* src = self.adj.data() + o * out_stride;
                                   for (std::size_t p = 0; p < self.inputs.size(); ++p) {
                                       auto& in = *self.inputs[p];
                                       if (in.requires_grad) {
                                           double* dst = in.adj.data() + o * block[p];
                                           for (std::size_t i = 0; i < block[p]; ++i) dst[i] += src[i];
                                       }
                                       src += block[p];
                                   }
                               }
                           });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len) {
    require_defined(x, "slice");
    if (axis >= x.rank()) throw DimError("slice: axis " + std::to_string(axis) + " out of rank");
    const std::size_t ext = x.shape()[axis];
    if (start + len > ext || len == 0)
        throw DimError("slice: range [" + std::to_string(start) + "," +
                       std::to_string(start + len) + ") out of extent " + std::to_string(ext));
    Shape out_shape = x.shape();
    out_shape[axis] = len;

    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= x.shape()[d];
    for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.shape()[d];
    const std::size_t in_stride = ext * inner;
    const std::size_t out_stride = len * inner;
    const std::size_t offset = start * inner;

    std::vector<double> out(outer * out_stride);
    for (std::size_t o = 0; o < outer; ++o) {
        const double* src = x.data().data() + o * in_stride + offset;
        std::copy(src, src + out_stride, out.data() + o * out_stride);
    }
    return detail::make_op(std::move(out_shape), std::move(out), {x},
                           [outer, in_stride, out_stride, offset](TensorImpl& self) {
                               auto& in = *self.inputs[0];
                               if (!in.requires_grad) return;
                               for (std::size_t o = 0; o < outer; ++o) {
                                   const double* src = self.adj.data() + o * out_stride;
                                   double* dst = in.adj.data() + o * in_stride + offset;
                                   for (std::size_t i = 0; i < out_stride; ++i) dst[i] += src[i];
                               }
                           });
}

Tensor reshape(const Tensor& x, Shape new_shape) {
    require_defined(x, "reshape");
    if (shape_numel(new_shape) != x.numel())
        throw DimError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                       shape_str(new_shape));
    std::vector<double> out(x.data().begin(), x.data().end());
    const std::size_t n = x.numel();
    return detail::make_op(std::move(new_shape), std::move(out), {x}, [n](TensorImpl& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        for (std::size_t i = 0; i < n; ++i) in.adj[i] += self.adj[i];
    });
}

namespace {

std::vector<std::size_t> row_major_strides(const Shape& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t d = shape.size(); d-- > 1;) strides[d - 1] = strides[d] * shape[d];
    return strides;
}

// out linear index for each input linear index under an axis swap
void transpose_copy(const Shape& in_shape, std::size_t ax0, std::size_t ax1, const double* src,
                    double* dst, bool accumulate_to_src_adj, double* src_adj = nullptr,
                    const double* dst_adj = nullptr) {
    Shape out_shape = in_shape;
    std::swap(out_shape[ax0], out_shape[ax1]);
    const auto in_strides = row_major_strides(in_shape);
    const auto out_strides = row_major_strides(out_shape);
    const std::size_t rank = in_shape.size();
    const std::size_t n = shape_numel(in_shape);
    std::vector<std::size_t> idx(rank, 0);
    for (std::size_t li = 0; li < n; ++li) {
        std::size_t rem = li;
        std::size_t lo = 0;
        for (std::size_t d = 0; d < rank; ++d) {
            idx[d] = rem / in_strides[d];
            rem %= in_strides[d];
        }
        std::swap(idx[ax0], idx[ax1]);
        for (std::size_t d = 0; d < rank; ++d) lo += idx[d] * out_strides[d];
        if (accumulate_to_src_adj)
            src_adj[li] += dst_adj[lo];
        else
            dst[lo] = src[li];
    }
}

}  // namespace

Tensor transpose(const Tensor& x, std::size_t axis0, std::size_t axis1) {
    require_defined(x, "transpose");
    if (axis0 >= x.rank() || axis1 >= x.rank())
        throw DimError("transpose: axes (" + std::to_string(axis0) + "," + std::to_string(axis1) +
                       ") out of rank for " + shape_str(x.shape()));
    Shape out_shape = x.shape();
    std::swap(out_shape[axis0], out_shape[axis1]);
    std::vector<double> out(x.numel());
    transpose_copy(x.shape(), axis0, axis1, x.data().data(), out.data(), false);
    Shape in_shape = x.shape();
    return detail::make_op(std::move(out_shape), std::move(out), {x},
                           [in_shape, axis0, axis1](TensorImpl& self) {
                               auto& in = *self.inputs[0];
                               if (!in.requires_grad) return;
                               transpose_copy(in_shape, axis0, axis1, nullptr, nullptr, true,
                                              in.adj.data(), self.adj.data());
                           });
}

Tensor sum(const Tensor& x) {
    require_defined(x, "sum");
    double total = 0.0;
    for (double v : x.data()) total += v;
    const std::size_t n = x.numel();
    return detail::make_op({1}, {total}, {x}, [n](TensorImpl& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        for (std::size_t i = 0; i < n; ++i) in.adj[i] += self.adj[0];
    });
}

Tensor mean(const Tensor& x) {
    require_defined(x, "mean");
    if (x.numel() == 0) throw ContractError("mean: empty tensor");
    double total = 0.0;
    for (double v : x.data()) total += v;
    const std::size_t n = x.numel();
    return detail::make_op({1}, {total / static_cast<double>(n)}, {x}, [n](TensorImpl& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        const double g = self.adj[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) in.adj[i] += g;
    });
}

Tensor expand_rows(const Tensor& x, std::size_t rows) {
    require_defined(x, "expand_rows");
    if (x.rank() != 2 || x.extent(0) != 1)
        throw DimError("expand_rows: expects [1,n], got " + shape_str(x.shape()));
    if (rows == 0) throw ContractError("expand_rows: zero rows");
    const std::size_t n = x.extent(1);
    std::vector<double> out(rows * n);
    for (std::size_t r = 0; r < rows; ++r)
        std::copy(x.data().begin(), x.data().end(), out.begin() + r * n);
    return detail::make_op({rows, n}, std::move(out), {x}, [rows, n](TensorImpl& self) {
        auto& in = *self.inputs[0];
        if (!in.requires_grad) return;
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n; ++j) in.adj[j] += self.adj[r * n + j];
    });
}

// --- parameters ------------------------------------------------------------

Tensor ParamRegistry::insert(const std::string& name, Shape shape, std::vector<double> values) {
    for (const Parameter& p : params_)
        if (p.name == name) throw ContractError("parameter name already registered: " + name);
    Tensor t = Tensor::from_data(std::move(shape), std::move(values), true);
    params_.push_back({name, t});
    return t;
}

Tensor ParamRegistry::add_uniform(const std::string& name, Shape shape, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = dist(rng_);
    return insert(name, std::move(shape), std::move(values));
}

Tensor ParamRegistry::add_fanin(const std::string& name, Shape shape, std::size_t fan_in) {
    if (fan_in == 0) throw ContractError("add_fanin: zero fan_in for " + name);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return add_uniform(name, std::move(shape), -bound, bound);
}

Tensor ParamRegistry::add_constant(const std::string& name, Shape shape, double value) {
    return insert(name, std::move(shape), std::vector<double>(shape_numel(shape), value));
}

Tensor ParamRegistry::find(const std::string& name) const {
    for (const Parameter& p : params_)
        if (p.name == name) return p.tensor;
    throw IndexError("parameter not found: " + name);
}

void ParamRegistry::zero_grads() {
    for (Parameter& p : params_) p.tensor.zero_grad();
}

std::size_t count_params(std::span<const Parameter> params) {
    std::size_t total = 0;
    for (const Parameter& p : params) total += p.tensor.numel();
    return total;
}

}  // namespace miniformer
