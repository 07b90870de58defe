#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "miniformer/data.hpp"
#include "miniformer/tensor.hpp"

namespace miniformer::layers {

// --- recurrent -------------------------------------------------------------

struct LstmState {
    Tensor h;  // [batch, hidden]
    Tensor c;  // [batch, hidden]
};

// One fused weight per gate over the concatenation [h_{t-1}, x_t].
struct LstmCellParams {
    Tensor W_f, W_i, W_c, W_o;  // [input+hidden, hidden]
    Tensor b_f, b_i, b_C, b_o;  // [hidden]
};

LstmCellParams lstm_params(ParamRegistry& reg, const std::string& prefix, std::size_t input,
                           std::size_t hidden);

// f = sig(W_f[h,x]+b_f); i = sig(W_i[h,x]+b_i); c~ = tanh(W_c[h,x]+b_C);
// c_t = f*c + i*c~; o = sig(W_o[h,x]+b_o); h_t = o*tanh(c_t)
LstmState lstm_cell_step(const LstmCellParams& params, const Tensor& x_t, const LstmState& prev);

struct BilstmOutput {
    Tensor states;  // [batch, len, 2*hidden]; positions >= length are zero
    LstmState final_fwd;  // state after the last unpadded forward step
    LstmState final_bwd;  // state after the backward pass reaches position 0
};

BilstmOutput bilstm_forward(const LstmCellParams& fwd, const LstmCellParams& bwd,
                            const Tensor& inputs, std::span<const std::size_t> lengths,
                            const LstmState& init_fwd, const LstmState& init_bwd);

// --- attention -------------------------------------------------------------

struct AttentionOutput {
    Tensor context;  // [batch, n_queries, d_v]
    Tensor weights;  // [batch, n_queries, n_keys]; rows sum to 1, masked keys get 0
};

// softmax(Q K^T / sqrt(d_k)) V. `mask` entries are 1=attend / 0=block and may
// be [batch, n_keys], [n_queries, n_keys] or [batch, n_queries, n_keys];
// blocked scores are set to -1e9 before the softmax. Pass an undefined tensor
// for no masking.
AttentionOutput scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                     const Tensor& mask = {});

struct MhaParams {
    std::size_t n_heads = 1;
    Tensor W_q, W_k, W_v, W_o;  // [d_model, d_model]
};

MhaParams mha_params(ParamRegistry& reg, const std::string& prefix, std::size_t d_model,
                     std::size_t n_heads);

Tensor multi_head_attention(const MhaParams& params, const Tensor& q, const Tensor& k,
                            const Tensor& v, const Tensor& mask = {});

// --- feed-forward / norm / embedding ----------------------------------------

// Sinusoidal table [len, d_model]; constant, added to embeddings by callers.
Tensor positional_encoding(std::size_t len, std::size_t d_model);

enum class FfnActivation { none, relu };

struct FfnParams {
    Tensor W1, b1;  // [d_model, d_ff], [d_ff]
    Tensor W2, b2;  // [d_ff, d_model], [d_model]
    FfnActivation activation = FfnActivation::none;
};

FfnParams ffn_params(ParamRegistry& reg, const std::string& prefix, std::size_t d_model,
                     std::size_t d_ff, FfnActivation activation);

Tensor ffn_forward(const FfnParams& params, const Tensor& x);

struct LayerNormParams {
    Tensor gain;  // [d]
    Tensor bias;  // [d]
};

LayerNormParams layer_norm_params(ParamRegistry& reg, const std::string& prefix, std::size_t d);

// (x - mean) / sqrt(var + 1e-5) * gain + bias over the last axis.
Tensor layer_norm(const LayerNormParams& params, const Tensor& x);

// Row gather: [vocab, d] x ids[B, L] -> [B, L, d]. Backward scatters into the
// table rows.
Tensor embedding_lookup(const Tensor& table, const data::IdMatrix& ids);

// x[..., d_in] * W[d_in, d_out] + b. Accepts rank-2 or rank-3 x; pass an
// undefined bias to skip it.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b = {});

// 0/1 attention mask [B, n_keys] from per-row valid lengths.
Tensor make_length_mask(std::span<const std::size_t> lengths, std::size_t n_keys);

// Lower-triangular [len, len] causal mask.
Tensor make_causal_mask(std::size_t len);

}  // namespace miniformer::layers
