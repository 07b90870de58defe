#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "miniformer/data.hpp"
#include "miniformer/layers.hpp"
#include "miniformer/tensor.hpp"

namespace miniformer::models {

// --- configs -----------------------------------------------------------------

struct MiniFormerConfig {
    std::size_t vocab_src = 0;
    std::size_t vocab_tgt = 0;
    std::size_t d_embed = 32;
    std::size_t d_hidden = 32;  // per direction
    std::size_t max_len = 64;
    layers::FfnActivation ffn_activation = layers::FfnActivation::none;

    // decoder hidden size; matches the encoder output dim so the dot-product
    // attention needs no extra projection
    std::size_t d_dec() const { return 2 * d_hidden; }

    std::string to_text() const;
    static MiniFormerConfig from_text(const std::string& text);
    void validate() const;
};

struct TransformerConfig {
    std::size_t vocab_src = 0;
    std::size_t vocab_tgt = 0;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t d_ff = 256;
    std::size_t n_layers_enc = 2;
    std::size_t n_layers_dec = 2;
    std::size_t max_len = 64;
    layers::FfnActivation ffn_activation = layers::FfnActivation::none;

    std::string to_text() const;
    static TransformerConfig from_text(const std::string& text);
    void validate() const;
};

// --- common interface ----------------------------------------------------------

class Seq2SeqModel {
public:
    virtual ~Seq2SeqModel() = default;

    virtual const char* kind() const = 0;
    virtual std::string config_text() const = 0;
    virtual std::size_t max_len() const = 0;

    virtual std::span<Parameter> parameters() = 0;
    virtual std::span<const Parameter> parameters() const = 0;
    void zero_grads();

    // Teacher-forced logits [B, T, vocab_tgt]; position t is the prediction
    // for gold token t+1.
    virtual Tensor forward_teacher_forced(const data::Batch& batch) = 0;

    // Deterministic argmax decoding; lowest token id wins ties. Returns the
    // emitted ids without BOS/EOS.
    virtual std::vector<std::int32_t> greedy_decode(std::span<const std::int32_t> src_ids,
                                                    std::size_t max_len) = 0;
};

std::size_t count_params(const Seq2SeqModel& model);
// Element counts grouped by the first segment of each parameter path.
std::map<std::string, std::size_t> param_breakdown(const Seq2SeqModel& model);

std::unique_ptr<Seq2SeqModel> make_model(const std::string& kind, const std::string& config_text,
                                         std::uint64_t seed);

// --- Mini-Former -----------------------------------------------------------------

struct EncoderOutput {
    Tensor states;  // [batch, src_len, 2*d_hidden]; padded positions are zero
    std::vector<std::size_t> lengths;
    layers::LstmState final_fwd;
    layers::LstmState final_bwd;
};

struct DecodeStep {
    Tensor logits;        // [batch, vocab_tgt]
    layers::LstmState state;
    Tensor attn_weights;  // [batch, src_len]
};

// Bi-LSTM encoder with learnable initial states and an attention decoder that
// scores encoder outputs with softmax(Dec.Enc / sqrt(d_enc)).
class MiniFormer final : public Seq2SeqModel {
public:
    MiniFormer(const MiniFormerConfig& cfg, std::uint64_t seed);

    const char* kind() const override { return "miniformer"; }
    std::string config_text() const override { return cfg_.to_text(); }
    std::size_t max_len() const override { return cfg_.max_len; }
    std::span<Parameter> parameters() override { return reg_.params(); }
    std::span<const Parameter> parameters() const override { return reg_.params(); }

    const MiniFormerConfig& config() const { return cfg_; }

    EncoderOutput encode(const data::IdMatrix& src_ids, std::span<const std::size_t> lengths);
    layers::LstmState initial_decoder_state(const EncoderOutput& enc);
    DecodeStep decode_step(std::span<const std::int32_t> prev_tokens,
                           const layers::LstmState& state, const EncoderOutput& enc);

    Tensor forward_teacher_forced(const data::Batch& batch) override;
    std::vector<std::int32_t> greedy_decode(std::span<const std::int32_t> src_ids,
                                            std::size_t max_len) override;

private:
    MiniFormerConfig cfg_;
    ParamRegistry reg_;

    Tensor src_table_, tgt_table_;
    layers::LstmCellParams enc_fwd_, enc_bwd_;
    Tensor h0_fwd_, c0_fwd_, h0_bwd_, c0_bwd_;
    layers::LstmCellParams dec_cell_;
    Tensor init_Wh_, init_bh_, init_Wc_, init_bc_;
    Tensor comb_W_, comb_b_;
    Tensor out_W_, out_b_;
};

// --- Transformer baseline ---------------------------------------------------------

// Pre-norm residual blocks; the FFN keeps the literal two-linear form unless
// the activation flag turns on relu.
class Transformer final : public Seq2SeqModel {
public:
    Transformer(const TransformerConfig& cfg, std::uint64_t seed);

    const char* kind() const override { return "transformer"; }
    std::string config_text() const override { return cfg_.to_text(); }
    std::size_t max_len() const override { return cfg_.max_len; }
    std::span<Parameter> parameters() override { return reg_.params(); }
    std::span<const Parameter> parameters() const override { return reg_.params(); }

    const TransformerConfig& config() const { return cfg_; }

    // Teacher-forced logits from padded id matrices.
    Tensor forward(const data::IdMatrix& src_ids, std::span<const std::size_t> src_lengths,
                   const data::IdMatrix& tgt_ids);

    Tensor forward_teacher_forced(const data::Batch& batch) override;
    std::vector<std::int32_t> greedy_decode(std::span<const std::int32_t> src_ids,
                                            std::size_t max_len) override;

private:
    struct EncLayer {
        layers::LayerNormParams ln1, ln2;
        layers::MhaParams self_attn;
        layers::FfnParams ffn;
    };
    struct DecLayer {
        layers::LayerNormParams ln1, ln2, ln3;
        layers::MhaParams self_attn, cross_attn;
        layers::FfnParams ffn;
    };

    Tensor encode(const data::IdMatrix& src_ids, std::span<const std::size_t> src_lengths);
    Tensor embed_with_positions(const Tensor& table, const data::IdMatrix& ids);

    TransformerConfig cfg_;
    ParamRegistry reg_;

    Tensor src_table_, tgt_table_;
    std::vector<EncLayer> enc_layers_;
    std::vector<DecLayer> dec_layers_;
    layers::LayerNormParams enc_final_ln_, dec_final_ln_;
    Tensor out_W_, out_b_;
};

}  // namespace miniformer::models
