#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "miniformer/data.hpp"
#include "miniformer/model.hpp"
#include "miniformer/tensor.hpp"

namespace miniformer::training {

// --- loss ----------------------------------------------------------------------

// Next-token targets for teacher forcing: gold[b,t] = tgt[b,t+1], masked to
// the positions that predict a real token (content or EOS).
struct LossTargets {
    data::IdMatrix gold;
    std::vector<std::uint8_t> mask;
};

LossTargets shift_targets(const data::Batch& batch);

// Mean over unmasked positions of -log softmax(logits)[gold]. PAD positions
// are excluded from both the sum and the count.
Tensor cross_entropy_loss(const Tensor& logits, const data::IdMatrix& gold,
                          std::span<const std::uint8_t> mask);

// --- optimizer -------------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamSlot {
    std::vector<double> m, v;
};

class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    const AdamConfig& config() const { return cfg_; }
    std::uint64_t step_count() const { return t_; }

    // One update over all parameters; requires populated gradients and zeroes
    // them afterwards.
    void step(std::span<Parameter> params);

    // checkpoint plumbing
    const std::map<std::string, AdamSlot>& slots() const { return slots_; }
    void restore(std::uint64_t t, std::map<std::string, AdamSlot> slots);

private:
    AdamConfig cfg_;
    std::uint64_t t_ = 0;
    std::map<std::string, AdamSlot> slots_;
};

// --- early stopping ----------------------------------------------------------------

struct EarlyStopState {
    double best_val_loss = std::numeric_limits<double>::infinity();
    std::size_t epochs_since_improvement = 0;
    std::size_t patience = 5;
    double min_delta = 1e-4;

    bool just_improved() const { return epochs_since_improvement == 0; }
};

enum class StopSignal { proceed, stop };

// Improvement means val_loss < best - min_delta; `stop` fires once `patience`
// epochs pass without one.
StopSignal early_stop_check(EarlyStopState& state, double val_loss);

// --- checkpoints --------------------------------------------------------------------

struct Checkpoint {
    std::uint32_t version = 0;
    std::string model_kind;
    std::string config_text;
    std::uint32_t epoch = 0;
    std::uint64_t seed = 0;
    std::string rng_state;  // serialized shuffle generator

    struct Blob {
        std::string name;
        Shape shape;
        std::vector<double> values;
    };
    std::vector<Blob> params;

    bool has_adam = false;
    std::uint64_t adam_t = 0;
    std::map<std::string, AdamSlot> adam_slots;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const models::Seq2SeqModel& model, const Adam* adam,
                                 std::uint32_t epoch, std::uint64_t seed,
                                 const std::string& rng_state);
Checkpoint parse_checkpoint(const std::string& bytes);

// Atomic write (temp file + rename).
void save_checkpoint(const std::string& path, const models::Seq2SeqModel& model, const Adam* adam,
                     std::uint32_t epoch, std::uint64_t seed, const std::string& rng_state);
Checkpoint load_checkpoint(const std::string& path);

// Copies parameter blobs into an existing model; names and shapes must match.
void apply_checkpoint(const Checkpoint& ck, models::Seq2SeqModel& model);
// Rebuilds the model recorded in the checkpoint and loads its parameters.
std::unique_ptr<models::Seq2SeqModel> model_from_checkpoint(const Checkpoint& ck);
void restore_adam(const Checkpoint& ck, Adam& adam);

// --- training loop -----------------------------------------------------------------

struct TrainOptions {
    std::size_t max_epochs = 50;
    std::size_t patience = 5;
    double min_delta = 1e-4;
    double clip_norm = 0.0;  // 0 disables clipping
    std::uint64_t seed = 0;  // shuffle generator seed
};

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double seconds = 0.0;
};

// `epoch=<k> train_loss=<x> val_loss=<y> seconds=<t>`
std::string format_epoch_line(const EpochLog& entry);

struct TrainResult {
    std::vector<EpochLog> log;
    std::size_t best_epoch = 0;
    double best_val_loss = std::numeric_limits<double>::infinity();
    bool stopped_early = false;
    std::string best_checkpoint;  // serialized snapshot taken at the best epoch
};

class Trainer {
public:
    Trainer(models::Seq2SeqModel& model, Adam& adam, TrainOptions opts);

    // One shuffled pass; returns the token-weighted mean loss. Throws
    // DivergenceError on a non-finite loss.
    double train_epoch(std::span<const data::Batch> batches);
    // Forward-only token-weighted mean loss.
    double eval_loss(std::span<const data::Batch> batches);

    // Full loop with early stopping; restores the best parameters at the end.
    // Emits one `epoch=... train_loss=... val_loss=... seconds=...` line per
    // epoch to `log_out` when given.
    TrainResult fit(std::span<const data::Batch> train, std::span<const data::Batch> val,
                    std::ostream* log_out = nullptr);

    std::size_t epochs_done() const { return epochs_done_; }
    std::string rng_state() const;
    void set_rng_state(const std::string& state);
    std::uint64_t seed() const { return opts_.seed; }

private:
    double run_batch(const data::Batch& batch, bool train, std::size_t index);

    models::Seq2SeqModel& model_;
    Adam& adam_;
    TrainOptions opts_;
    std::mt19937_64 shuffle_rng_;
    std::size_t epochs_done_ = 0;
};

}  // namespace miniformer::training
