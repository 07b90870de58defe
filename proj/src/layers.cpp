#include "miniformer/layers.hpp"

#include <algorithm>
#include <cmath>

namespace miniformer::layers {

namespace {

constexpr double kMaskedScore = -1e9;
constexpr double kLayerNormEps = 1e-5;

}  // namespace

// --- lstm --------------------------------------------------------------------

LstmCellParams lstm_params(ParamRegistry& reg, const std::string& prefix, std::size_t input,
                           std::size_t hidden) {
    const std::size_t fan_in = input + hidden;
    LstmCellParams p;
    p.W_f = reg.add_fanin(prefix + ".W_f", {fan_in, hidden}, fan_in);
    p.W_i = reg.add_fanin(prefix + ".W_i", {fan_in, hidden}, fan_in);
    p.W_c = reg.add_fanin(prefix + ".W_c", {fan_in, hidden}, fan_in);
    p.W_o = reg.add_fanin(prefix + ".W_o", {fan_in, hidden}, fan_in);
    p.b_f = reg.add_constant(prefix + ".b_f", {hidden}, 0.0);
    p.b_i = reg.add_constant(prefix + ".b_i", {hidden}, 0.0);
    p.b_C = reg.add_constant(prefix + ".b_C", {hidden}, 0.0);
    p.b_o = reg.add_constant(prefix + ".b_o", {hidden}, 0.0);
    return p;
}

LstmState lstm_cell_step(const LstmCellParams& params, const Tensor& x_t, const LstmState& prev) {
    if (prev.h.shape() != prev.c.shape())
        throw DimError("lstm_cell_step: h and c shapes differ: " + shape_str(prev.h.shape()) +
                       " vs " + shape_str(prev.c.shape()));
    Tensor hx = concat({prev.h, x_t}, 1);
    Tensor f = sigmoid(add(matmul(hx, params.W_f), params.b_f));
    Tensor i = sigmoid(add(matmul(hx, params.W_i), params.b_i));
    Tensor c_tilde = miniformer::tanh(add(matmul(hx, params.W_c), params.b_C));
    Tensor c_t = add(mul(f, prev.c), mul(i, c_tilde));
    Tensor o = sigmoid(add(matmul(hx, params.W_o), params.b_o));
    Tensor h_t = mul(o, miniformer::tanh(c_t));
    return {h_t, c_t};
}

namespace {

// 0/1 row mask expanded over `hidden` columns; constant, outside the graph.
Tensor step_mask(std::span<const std::size_t> lengths, std::size_t t, std::size_t hidden,
                 bool invert) {
    std::vector<double> m(lengths.size() * hidden);
    for (std::size_t b = 0; b < lengths.size(); ++b) {
        const double active = t < lengths[b] ? 1.0 : 0.0;
        std::fill_n(m.begin() + b * hidden, hidden, invert ? 1.0 - active : active);
    }
    return Tensor::from_data({lengths.size(), hidden}, std::move(m));
}

LstmState blend(const LstmState& stepped, const LstmState& prev, const Tensor& active,
                const Tensor& frozen) {
    return {add(mul(active, stepped.h), mul(frozen, prev.h)),
            add(mul(active, stepped.c), mul(frozen, prev.c))};
}

}  // namespace

BilstmOutput bilstm_forward(const LstmCellParams& fwd, const LstmCellParams& bwd,
                            const Tensor& inputs, std::span<const std::size_t> lengths,
                            const LstmState& init_fwd, const LstmState& init_bwd) {
    if (inputs.rank() != 3)
        throw DimError("bilstm: inputs must be [batch,len,d], got " + shape_str(inputs.shape()));
    const std::size_t batch = inputs.extent(0);
    const std::size_t len = inputs.extent(1);
    const std::size_t d = inputs.extent(2);
    const std::size_t hidden = init_fwd.h.extent(1);
    if (lengths.size() != batch)
        throw DimError("bilstm: expected " + std::to_string(batch) + " lengths, got " +
                       std::to_string(lengths.size()));
    std::size_t min_len = len;
    for (std::size_t b = 0; b < batch; ++b) {
        if (lengths[b] == 0)
            throw ContractError("bilstm: zero-length sequence at batch index " + std::to_string(b));
        if (lengths[b] > len)
            throw ContractError("bilstm: length " + std::to_string(lengths[b]) +
                                " exceeds padded extent " + std::to_string(len));
        min_len = std::min(min_len, lengths[b]);
    }

    std::vector<Tensor> xs(len);
    for (std::size_t t = 0; t < len; ++t)
        xs[t] = reshape(slice(inputs, 1, t, 1), {batch, d});

    std::vector<Tensor> h_fwd(len), h_bwd(len);
    LstmState state = init_fwd;
    for (std::size_t t = 0; t < len; ++t) {
        LstmState stepped = lstm_cell_step(fwd, xs[t], state);
        if (t < min_len) {
            state = stepped;
            h_fwd[t] = state.h;
        } else {
            Tensor active = step_mask(lengths, t, hidden, false);
            Tensor frozen = step_mask(lengths, t, hidden, true);
            state = blend(stepped, state, active, frozen);
            h_fwd[t] = mul(active, state.h);
        }
    }
    LstmState final_fwd = state;

    state = init_bwd;
    for (std::size_t tt = len; tt-- > 0;) {
        LstmState stepped = lstm_cell_step(bwd, xs[tt], state);
        if (tt < min_len) {
            state = stepped;
            h_bwd[tt] = state.h;
        } else {
            Tensor active = step_mask(lengths, tt, hidden, false);
            Tensor frozen = step_mask(lengths, tt, hidden, true);
            state = blend(stepped, state, active, frozen);
            h_bwd[tt] = mul(active, state.h);
        }
    }
    LstmState final_bwd = state;

    std::vector<Tensor> per_pos(len);
    for (std::size_t t = 0; t < len; ++t)
        per_pos[t] = reshape(concat({h_fwd[t], h_bwd[t]}, 1), {batch, 1, 2 * hidden});
    return {concat(per_pos, 1), final_fwd, final_bwd};
}

// --- attention -----------------------------------------------------------------

namespace {

// Additive mask constant [B,m,n] built from a 0/1 keep-mask of rank 2 or 3.
Tensor additive_mask(const Tensor& mask, std::size_t batch, std::size_t m, std::size_t n) {
    std::vector<double> out(batch * m * n);
    const auto mv = mask.data();
    auto fill = [&](auto&& value_at) {
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    out[(b * m + i) * n + j] = value_at(b, i, j) != 0.0 ? 0.0 : kMaskedScore;
    };
    if (mask.rank() == 2 && mask.extent(0) == batch && mask.extent(1) == n) {
        fill([&](std::size_t b, std::size_t, std::size_t j) { return mv[b * n + j]; });
    } else if (mask.rank() == 2 && mask.extent(0) == m && mask.extent(1) == n) {
        fill([&](std::size_t, std::size_t i, std::size_t j) { return mv[i * n + j]; });
    } else if (mask.rank() == 3 && mask.extent(0) == batch && mask.extent(1) == m &&
               mask.extent(2) == n) {
        fill([&](std::size_t b, std::size_t i, std::size_t j) { return mv[(b * m + i) * n + j]; });
    } else {
        throw DimError("attention: mask shape " + shape_str(mask.shape()) +
                       " does not fit scores [" + std::to_string(batch) + "," +
                       std::to_string(m) + "," + std::to_string(n) + "]");
    }
    return Tensor::from_data({batch, m, n}, std::move(out));
}

}  // namespace

AttentionOutput scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                     const Tensor& mask) {
    if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3)
        throw DimError("attention: Q,K,V must be rank-3");
    const std::size_t batch = q.extent(0), m = q.extent(1), d_k = q.extent(2);
    if (k.extent(0) != batch || v.extent(0) != batch)
        throw DimError("attention: batch extents differ");
    if (k.extent(2) != d_k)
        throw DimError("attention: query dim " + std::to_string(d_k) + " vs key dim " +
                       std::to_string(k.extent(2)));
    const std::size_t n = k.extent(1);
    if (v.extent(1) != n)
        throw DimError("attention: key count " + std::to_string(n) + " vs value count " +
                       std::to_string(v.extent(1)));

    Tensor scores = scale(bmm(q, transpose(k, 1, 2)), 1.0 / std::sqrt(static_cast<double>(d_k)));
    if (mask.defined()) scores = add(scores, additive_mask(mask, batch, m, n));
    Tensor weights = softmax(scores);
    return {bmm(weights, v), weights};
}

MhaParams mha_params(ParamRegistry& reg, const std::string& prefix, std::size_t d_model,
                     std::size_t n_heads) {
    if (n_heads == 0 || d_model % n_heads != 0)
        throw ConfigError("multi-head attention: d_model " + std::to_string(d_model) +
                          " not divisible by heads " + std::to_string(n_heads));
    MhaParams p;
    p.n_heads = n_heads;
    p.W_q = reg.add_fanin(prefix + ".W_q", {d_model, d_model}, d_model);
    p.W_k = reg.add_fanin(prefix + ".W_k", {d_model, d_model}, d_model);
    p.W_v = reg.add_fanin(prefix + ".W_v", {d_model, d_model}, d_model);
    p.W_o = reg.add_fanin(prefix + ".W_o", {d_model, d_model}, d_model);
    return p;
}

Tensor multi_head_attention(const MhaParams& params, const Tensor& q, const Tensor& k,
                            const Tensor& v, const Tensor& mask) {
    const std::size_t d_model = params.W_q.extent(0);
    if (params.n_heads == 0 || d_model % params.n_heads != 0)
        throw ConfigError("multi-head attention: d_model " + std::to_string(d_model) +
                          " not divisible by heads " + std::to_string(params.n_heads));
    const std::size_t d_head = d_model / params.n_heads;

    Tensor qp = linear(q, params.W_q);
    Tensor kp = linear(k, params.W_k);
    Tensor vp = linear(v, params.W_v);

    std::vector<Tensor> heads(params.n_heads);
    for (std::size_t h = 0; h < params.n_heads; ++h) {
        Tensor qh = slice(qp, 2, h * d_head, d_head);
        Tensor kh = slice(kp, 2, h * d_head, d_head);
        Tensor vh = slice(vp, 2, h * d_head, d_head);
        heads[h] = scaled_dot_attention(qh, kh, vh, mask).context;
    }
    return linear(concat(heads, 2), params.W_o);
}

// --- positional encoding / ffn / layer norm -----------------------------------

Tensor positional_encoding(std::size_t len, std::size_t d_model) {
    if (d_model % 2 != 0)
        throw ConfigError("positional_encoding: d_model must be even, got " +
                          std::to_string(d_model));
    std::vector<double> pe(len * d_model);
    for (std::size_t pos = 0; pos < len; ++pos) {
        for (std::size_t c = 0; c < d_model; ++c) {
            const double exponent = static_cast<double>(2 * (c / 2)) / static_cast<double>(d_model);
            const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
            pe[pos * d_model + c] = c % 2 == 0 ? std::sin(angle) : std::cos(angle);
        }
    }
    return Tensor::from_data({len, d_model}, std::move(pe));
}

FfnParams ffn_params(ParamRegistry& reg, const std::string& prefix, std::size_t d_model,
                     std::size_t d_ff, FfnActivation activation) {
    FfnParams p;
    p.W1 = reg.add_fanin(prefix + ".W1", {d_model, d_ff}, d_model);
    p.b1 = reg.add_constant(prefix + ".b1", {d_ff}, 0.0);
    p.W2 = reg.add_fanin(prefix + ".W2", {d_ff, d_model}, d_ff);
    p.b2 = reg.add_constant(prefix + ".b2", {d_model}, 0.0);
    p.activation = activation;
    return p;
}

Tensor ffn_forward(const FfnParams& params, const Tensor& x) {
    Tensor h = linear(x, params.W1, params.b1);
    if (params.activation == FfnActivation::relu) h = relu(h);
    return linear(h, params.W2, params.b2);
}

LayerNormParams layer_norm_params(ParamRegistry& reg, const std::string& prefix, std::size_t d) {
    return {reg.add_constant(prefix + ".gain", {d}, 1.0),
            reg.add_constant(prefix + ".bias", {d}, 0.0)};
}

Tensor layer_norm(const LayerNormParams& params, const Tensor& x) {
    if (x.rank() < 1) throw DimError("layer_norm: rank-0 input");
    const std::size_t d = x.shape().back();
    if (params.gain.numel() != d || params.bias.numel() != d)
        throw DimError("layer_norm: params sized " + std::to_string(params.gain.numel()) +
                       " for feature dim " + std::to_string(d));
    const std::size_t slices = x.numel() / d;

    std::vector<double> out(x.numel());
    auto xhat = std::make_shared<std::vector<double>>(x.numel());
    auto inv_sigma = std::make_shared<std::vector<double>>(slices);
    const auto xv = x.data();
    const auto gv = params.gain.data();
    const auto bv = params.bias.data();
    for (std::size_t s = 0; s < slices; ++s) {
        const double* in = xv.data() + s * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += in[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        (*inv_sigma)[s] = inv;
        for (std::size_t j = 0; j < d; ++j) {
            const double xh = (in[j] - mu) * inv;
            (*xhat)[s * d + j] = xh;
            out[s * d + j] = xh * gv[j] + bv[j];
        }
    }

    return detail::make_op(
        x.shape(), std::move(out), {x, params.gain, params.bias},
        [d, slices, xhat, inv_sigma](detail::TensorImpl& self) {
            auto& xin = *self.inputs[0];
            auto& gain = *self.inputs[1];
            auto& bias = *self.inputs[2];
            const double dd = static_cast<double>(d);
            for (std::size_t s = 0; s < slices; ++s) {
                const double* adj = self.adj.data() + s * d;
                const double* xh = xhat->data() + s * d;
                if (gain.requires_grad)
                    for (std::size_t j = 0; j < d; ++j) gain.adj[j] += adj[j] * xh[j];
                if (bias.requires_grad)
                    for (std::size_t j = 0; j < d; ++j) bias.adj[j] += adj[j];
                if (xin.requires_grad) {
                    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dxh = adj[j] * gain.data[j];
                        sum_dxhat += dxh;
                        sum_dxhat_xhat += dxh * xh[j];
                    }
                    const double inv = (*inv_sigma)[s];
                    double* xa = xin.adj.data() + s * d;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dxh = adj[j] * gain.data[j];
                        xa[j] += inv * (dxh - sum_dxhat / dd - xh[j] * sum_dxhat_xhat / dd);
                    }
                }
            }
        });
}

// --- embedding / linear ---------------------------------------------------------

Tensor embedding_lookup(const Tensor& table, const data::IdMatrix& ids) {
    if (table.rank() != 2)
        throw DimError("embedding: table must be [vocab,d], got " + shape_str(table.shape()));
    const std::size_t vocab = table.extent(0);
    const std::size_t d = table.extent(1);
    const std::size_t batch = ids.rows, len = ids.cols;

    std::vector<double> out(batch * len * d);
    const auto tv = table.data();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t l = 0; l < len; ++l) {
            const std::int32_t id = ids.at(b, l);
            if (id < 0 || static_cast<std::size_t>(id) >= vocab)
                throw IndexError("embedding: id " + std::to_string(id) +
                                 " out of range [0," + std::to_string(vocab) + ")");
            std::copy_n(tv.data() + static_cast<std::size_t>(id) * d, d,
                        out.data() + (b * len + l) * d);
        }
    }
    std::vector<std::int32_t> flat = ids.ids;
    return detail::make_op({batch, len, d}, std::move(out), {table},
                           [flat, d](detail::TensorImpl& self) {
                               auto& tab = *self.inputs[0];
                               if (!tab.requires_grad) return;
                               for (std::size_t i = 0; i < flat.size(); ++i) {
                                   double* dst = tab.adj.data() +
                                                 static_cast<std::size_t>(flat[i]) * d;
                                   const double* src = self.adj.data() + i * d;
                                   for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                               }
                           });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    Tensor out;
    if (x.rank() == 2) {
        out = matmul(x, w);
    } else if (x.rank() == 3) {
        const std::size_t b0 = x.extent(0), b1 = x.extent(1), d_in = x.extent(2);
        Tensor flat = matmul(reshape(x, {b0 * b1, d_in}), w);
        out = reshape(flat, {b0, b1, w.extent(1)});
    } else {
        throw DimError("linear: expects rank-2 or rank-3 input, got " + shape_str(x.shape()));
    }
    return b.defined() ? add(out, b) : out;
}

Tensor make_length_mask(std::span<const std::size_t> lengths, std::size_t n_keys) {
    std::vector<double> m(lengths.size() * n_keys, 0.0);
    for (std::size_t b = 0; b < lengths.size(); ++b)
        std::fill_n(m.begin() + b * n_keys, std::min(lengths[b], n_keys), 1.0);
    return Tensor::from_data({lengths.size(), n_keys}, std::move(m));
}

Tensor make_causal_mask(std::size_t len) {
    std::vector<double> m(len * len, 0.0);
    for (std::size_t i = 0; i < len; ++i)
        for (std::size_t j = 0; j <= i; ++j) m[i * len + j] = 1.0;
    return Tensor::from_data({len, len}, std::move(m));
}

}  // namespace miniformer::layers
