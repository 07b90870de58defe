#include <cmath>
#include <string>

#include "miniformer/model.hpp"

namespace miniformer::models {

using namespace miniformer::layers;

Transformer::Transformer(const TransformerConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), reg_(seed) {
    cfg_.validate();
    const std::size_t M = cfg_.d_model;

    src_table_ = reg_.add_fanin("src_embed.table", {cfg_.vocab_src, M}, M);
    tgt_table_ = reg_.add_fanin("tgt_embed.table", {cfg_.vocab_tgt, M}, M);

    enc_layers_.reserve(cfg_.n_layers_enc);
    for (std::size_t l = 0; l < cfg_.n_layers_enc; ++l) {
        const std::string prefix = "encoder.layer" + std::to_string(l);
        EncLayer layer;
        layer.ln1 = layer_norm_params(reg_, prefix + ".ln1", M);
        layer.self_attn = mha_params(reg_, prefix + ".self_attn", M, cfg_.n_heads);
        layer.ln2 = layer_norm_params(reg_, prefix + ".ln2", M);
        layer.ffn = ffn_params(reg_, prefix + ".ffn", M, cfg_.d_ff, cfg_.ffn_activation);
        enc_layers_.push_back(std::move(layer));
    }
    enc_final_ln_ = layer_norm_params(reg_, "encoder.ln_final", M);

    dec_layers_.reserve(cfg_.n_layers_dec);
    for (std::size_t l = 0; l < cfg_.n_layers_dec; ++l) {
        const std::string prefix = "decoder.layer" + std::to_string(l);
        DecLayer layer;
        layer.ln1 = layer_norm_params(reg_, prefix + ".ln1", M);
        layer.self_attn = mha_params(reg_, prefix + ".self_attn", M, cfg_.n_heads);
        layer.ln2 = layer_norm_params(reg_, prefix + ".ln2", M);
        layer.cross_attn = mha_params(reg_, prefix + ".cross_attn", M, cfg_.n_heads);
        layer.ln3 = layer_norm_params(reg_, prefix + ".ln3", M);
        layer.ffn = ffn_params(reg_, prefix + ".ffn", M, cfg_.d_ff, cfg_.ffn_activation);
        dec_layers_.push_back(std::move(layer));
    }
    dec_final_ln_ = layer_norm_params(reg_, "decoder.ln_final", M);

    out_W_ = reg_.add_fanin("out_proj.W", {M, cfg_.vocab_tgt}, M);
    out_b_ = reg_.add_constant("out_proj.b", {cfg_.vocab_tgt}, 0.0);
}

Tensor Transformer::embed_with_positions(const Tensor& table, const data::IdMatrix& ids) {
    const std::size_t len = ids.cols;
    const std::size_t M = cfg_.d_model;
    Tensor emb = embedding_lookup(table, ids);  // [B, len, M]
    Tensor pe = positional_encoding(len, M);
    // tile the constant encoding over the batch
    std::vector<double> tiled(ids.rows * len * M);
    for (std::size_t b = 0; b < ids.rows; ++b)
        std::copy(pe.data().begin(), pe.data().end(), tiled.begin() + b * len * M);
    return add(emb, Tensor::from_data({ids.rows, len, M}, std::move(tiled)));
}

Tensor Transformer::encode(const data::IdMatrix& src_ids,
                           std::span<const std::size_t> src_lengths) {
    Tensor mask = make_length_mask(src_lengths, src_ids.cols);
    Tensor x = embed_with_positions(src_table_, src_ids);
    for (EncLayer& layer : enc_layers_) {
        Tensor normed = layer_norm(layer.ln1, x);
        x = add(x, multi_head_attention(layer.self_attn, normed, normed, normed, mask));
        x = add(x, ffn_forward(layer.ffn, layer_norm(layer.ln2, x)));
    }
    return layer_norm(enc_final_ln_, x);
}

Tensor Transformer::forward(const data::IdMatrix& src_ids,
                            std::span<const std::size_t> src_lengths,
                            const data::IdMatrix& tgt_ids) {
    if (tgt_ids.cols == 0) throw ContractError("transformer: empty target");
    Tensor enc_out = encode(src_ids, src_lengths);
    Tensor src_mask = make_length_mask(src_lengths, src_ids.cols);
    Tensor causal = make_causal_mask(tgt_ids.cols);

    Tensor y = embed_with_positions(tgt_table_, tgt_ids);
    for (DecLayer& layer : dec_layers_) {
        Tensor normed = layer_norm(layer.ln1, y);
        y = add(y, multi_head_attention(layer.self_attn, normed, normed, normed, causal));
        Tensor normed2 = layer_norm(layer.ln2, y);
        y = add(y, multi_head_attention(layer.cross_attn, normed2, enc_out, enc_out, src_mask));
        y = add(y, ffn_forward(layer.ffn, layer_norm(layer.ln3, y)));
    }
    y = layer_norm(dec_final_ln_, y);
    return linear(y, out_W_, out_b_);  // [B, T, vocab_tgt]
}

Tensor Transformer::forward_teacher_forced(const data::Batch& batch) {
    for (std::size_t b = 0; b < batch.batch_size(); ++b)
        if (batch.tgt_ids.at(b, 0) != data::Vocab::kBos)
            throw ContractError("forward_teacher_forced: target row " + std::to_string(b) +
                                " does not start with BOS");
    return forward(batch.src_ids, batch.src_lengths, batch.tgt_ids);
}

std::vector<std::int32_t> Transformer::greedy_decode(std::span<const std::int32_t> src_ids,
                                                     std::size_t max_len) {
    if (max_len == 0) throw ContractError("greedy_decode: max_len must be >= 1");
    if (src_ids.empty()) return {};

    data::IdMatrix src(1, src_ids.size());
    for (std::size_t i = 0; i < src_ids.size(); ++i) src.at(0, i) = src_ids[i];
    const std::size_t lengths[] = {src_ids.size()};

    // re-run the decoder over the growing prefix each step
    std::vector<std::int32_t> prefix = {data::Vocab::kBos};
    std::vector<std::int32_t> out;
    for (std::size_t t = 0; t < max_len; ++t) {
        data::IdMatrix tgt(1, prefix.size());
        for (std::size_t i = 0; i < prefix.size(); ++i) tgt.at(0, i) = prefix[i];
        Tensor logits = forward(src, lengths, tgt);
        const std::size_t V = cfg_.vocab_tgt;
        const double* last = logits.data().data() + (prefix.size() - 1) * V;
        std::int32_t best = 0;
        for (std::size_t v = 1; v < V; ++v)
            if (last[v] > last[static_cast<std::size_t>(best)]) best = static_cast<std::int32_t>(v);
        if (best == data::Vocab::kEos) break;
        out.push_back(best);
        prefix.push_back(best);
    }
    return out;
}

}  // namespace miniformer::models
