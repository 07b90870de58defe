#include <cmath>

#include "miniformer/model.hpp"

namespace miniformer::models {

using namespace miniformer::layers;

MiniFormer::MiniFormer(const MiniFormerConfig& cfg, std::uint64_t seed) : cfg_(cfg), reg_(seed) {
    cfg_.validate();
    const std::size_t E = cfg_.d_embed;
    const std::size_t H = cfg_.d_hidden;
    const std::size_t D = cfg_.d_dec();

    src_table_ = reg_.add_fanin("src_embed.table", {cfg_.vocab_src, E}, E);
    tgt_table_ = reg_.add_fanin("tgt_embed.table", {cfg_.vocab_tgt, E}, E);

    enc_fwd_ = lstm_params(reg_, "encoder.lstm_fwd", E, H);
    enc_bwd_ = lstm_params(reg_, "encoder.lstm_bwd", E, H);
    // learnable initial states, drawn from U(-1e-2, 1e-2)
    h0_fwd_ = reg_.add_uniform("encoder.init_fwd.h0", {1, H}, -1e-2, 1e-2);
    c0_fwd_ = reg_.add_uniform("encoder.init_fwd.c0", {1, H}, -1e-2, 1e-2);
    h0_bwd_ = reg_.add_uniform("encoder.init_bwd.h0", {1, H}, -1e-2, 1e-2);
    c0_bwd_ = reg_.add_uniform("encoder.init_bwd.c0", {1, H}, -1e-2, 1e-2);

    dec_cell_ = lstm_params(reg_, "decoder.lstm", E, D);
    init_Wh_ = reg_.add_fanin("decoder.init_proj.W_h", {2 * H, D}, 2 * H);
    init_bh_ = reg_.add_constant("decoder.init_proj.b_h", {D}, 0.0);
    init_Wc_ = reg_.add_fanin("decoder.init_proj.W_c", {2 * H, D}, 2 * H);
    init_bc_ = reg_.add_constant("decoder.init_proj.b_c", {D}, 0.0);

    comb_W_ = reg_.add_fanin("decoder.combine.W", {2 * H + D, D}, 2 * H + D);
    comb_b_ = reg_.add_constant("decoder.combine.b", {D}, 0.0);
    out_W_ = reg_.add_fanin("decoder.out_proj.W", {D, cfg_.vocab_tgt}, D);
    out_b_ = reg_.add_constant("decoder.out_proj.b", {cfg_.vocab_tgt}, 0.0);
}

EncoderOutput MiniFormer::encode(const data::IdMatrix& src_ids,
                                 std::span<const std::size_t> lengths) {
    const std::size_t batch = src_ids.rows;
    Tensor emb = embedding_lookup(src_table_, src_ids);
    LstmState init_f{expand_rows(h0_fwd_, batch), expand_rows(c0_fwd_, batch)};
    LstmState init_b{expand_rows(h0_bwd_, batch), expand_rows(c0_bwd_, batch)};
    BilstmOutput out = bilstm_forward(enc_fwd_, enc_bwd_, emb, lengths, init_f, init_b);
    return {out.states, {lengths.begin(), lengths.end()}, out.final_fwd, out.final_bwd};
}

LstmState MiniFormer::initial_decoder_state(const EncoderOutput& enc) {
    Tensor h_cat = concat({enc.final_fwd.h, enc.final_bwd.h}, 1);
    Tensor c_cat = concat({enc.final_fwd.c, enc.final_bwd.c}, 1);
    return {miniformer::tanh(linear(h_cat, init_Wh_, init_bh_)),
            miniformer::tanh(linear(c_cat, init_Wc_, init_bc_))};
}

DecodeStep MiniFormer::decode_step(std::span<const std::int32_t> prev_tokens,
                                   const LstmState& state, const EncoderOutput& enc) {
    const std::size_t batch = enc.states.extent(0);
    const std::size_t src_len = enc.states.extent(1);
    const std::size_t d_enc = enc.states.extent(2);
    if (prev_tokens.size() != batch)
        throw DimError("decode_step: got " + std::to_string(prev_tokens.size()) +
                       " tokens for batch " + std::to_string(batch));

    data::IdMatrix prev(batch, 1);
    for (std::size_t b = 0; b < batch; ++b) prev.at(b, 0) = prev_tokens[b];
    Tensor x = reshape(embedding_lookup(tgt_table_, prev), {batch, cfg_.d_embed});

    LstmState next = lstm_cell_step(dec_cell_, x, state);
    Tensor dec_out = next.h;  // [B, d_dec]

    Tensor q = reshape(dec_out, {batch, 1, d_enc});
    Tensor mask = make_length_mask(enc.lengths, src_len);
    AttentionOutput attn = scaled_dot_attention(q, enc.states, enc.states, mask);
    Tensor context = reshape(attn.context, {batch, d_enc});

    Tensor combined =
        miniformer::tanh(linear(concat({context, dec_out}, 1), comb_W_, comb_b_));
    Tensor logits = linear(combined, out_W_, out_b_);
    return {logits, next, reshape(attn.weights, {batch, src_len})};
}

Tensor MiniFormer::forward_teacher_forced(const data::Batch& batch) {
    const std::size_t tgt_len = batch.tgt_ids.cols;
    if (tgt_len == 0) throw ContractError("forward_teacher_forced: empty target");
    for (std::size_t b = 0; b < batch.batch_size(); ++b)
        if (batch.tgt_ids.at(b, 0) != data::Vocab::kBos)
            throw ContractError("forward_teacher_forced: target row " + std::to_string(b) +
                                " does not start with BOS");

    EncoderOutput enc = encode(batch.src_ids, batch.src_lengths);
    LstmState state = initial_decoder_state(enc);

    std::vector<Tensor> per_step(tgt_len);
    std::vector<std::int32_t> prev(batch.batch_size());
    for (std::size_t t = 0; t < tgt_len; ++t) {
        for (std::size_t b = 0; b < batch.batch_size(); ++b) prev[b] = batch.tgt_ids.at(b, t);
        DecodeStep step = decode_step(prev, state, enc);
        state = step.state;
        per_step[t] = reshape(step.logits, {batch.batch_size(), 1, cfg_.vocab_tgt});
    }
    return concat(per_step, 1);
}

std::vector<std::int32_t> MiniFormer::greedy_decode(std::span<const std::int32_t> src_ids,
                                                    std::size_t max_len) {
    if (max_len == 0) throw ContractError("greedy_decode: max_len must be >= 1");
    if (src_ids.empty()) return {};

    data::IdMatrix src(1, src_ids.size());
    for (std::size_t i = 0; i < src_ids.size(); ++i) src.at(0, i) = src_ids[i];
    const std::size_t lengths[] = {src_ids.size()};

    EncoderOutput enc = encode(src, lengths);
    LstmState state = initial_decoder_state(enc);

    std::vector<std::int32_t> out;
    std::int32_t prev = data::Vocab::kBos;
    for (std::size_t t = 0; t < max_len; ++t) {
        DecodeStep step = decode_step({&prev, 1}, state, enc);
        state = step.state;
        auto logits = step.logits.data();
        std::int32_t best = 0;
        for (std::size_t v = 1; v < cfg_.vocab_tgt; ++v)
            if (logits[v] > logits[static_cast<std::size_t>(best)])
                best = static_cast<std::int32_t>(v);
        if (best == data::Vocab::kEos) break;
        out.push_back(best);
        prev = best;
    }
    return out;
}

}  // namespace miniformer::models
