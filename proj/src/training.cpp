#include "miniformer/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>

namespace miniformer::training {

// --- loss ------------------------------------------------------------------------

LossTargets shift_targets(const data::Batch& batch) {
    const std::size_t B = batch.tgt_ids.rows;
    const std::size_t T = batch.tgt_ids.cols;
    LossTargets out;
    out.gold = data::IdMatrix(B, T, data::Vocab::kPad);
    out.mask.assign(B * T, 0);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t t = 0; t + 1 < T; ++t) out.gold.at(b, t) = batch.tgt_ids.at(b, t + 1);
        for (std::size_t t = 0; t + 1 < batch.tgt_lengths[b]; ++t) out.mask[b * T + t] = 1;
    }
    return out;
}

Tensor cross_entropy_loss(const Tensor& logits, const data::IdMatrix& gold,
                          std::span<const std::uint8_t> mask) {
    if (logits.rank() != 3)
        throw DimError("cross_entropy: logits must be [B,T,V], got " + shape_str(logits.shape()));
    const std::size_t B = logits.extent(0), T = logits.extent(1), V = logits.extent(2);
    if (gold.rows != B || gold.cols != T)
        throw DimError("cross_entropy: gold ids are " + std::to_string(gold.rows) + "x" +
                       std::to_string(gold.cols) + " for logits " + shape_str(logits.shape()));
    if (mask.size() != B * T)
        throw DimError("cross_entropy: mask size " + std::to_string(mask.size()) +
                       " for B*T = " + std::to_string(B * T));

    std::size_t count = 0;
    for (auto m : mask) count += m != 0;
    if (count == 0) throw ContractError("cross_entropy: all positions masked");

    // cache softmax probabilities for the backward pass
    auto probs = std::make_shared<std::vector<double>>(logits.numel(), 0.0);
    const auto lv = logits.data();
    double total = 0.0;
    for (std::size_t pos = 0; pos < B * T; ++pos) {
        if (!mask[pos]) continue;
        const std::int32_t g = gold.ids[pos];
        if (g < 0 || static_cast<std::size_t>(g) >= V)
            throw ContractError("cross_entropy: gold id " + std::to_string(g) +
                                " out of range [0," + std::to_string(V) + ")");
        const double* row = lv.data() + pos * V;
        double mx = row[0];
        for (std::size_t v = 1; v < V; ++v) mx = std::max(mx, row[v]);
        double z = 0.0;
        double* prow = probs->data() + pos * V;
        for (std::size_t v = 0; v < V; ++v) {
            prow[v] = std::exp(row[v] - mx);
            z += prow[v];
        }
        for (std::size_t v = 0; v < V; ++v) prow[v] /= z;
        total += std::log(z) + mx - row[static_cast<std::size_t>(g)];
    }

    std::vector<std::int32_t> gold_flat = gold.ids;
    std::vector<std::uint8_t> mask_copy(mask.begin(), mask.end());
    const double inv_count = 1.0 / static_cast<double>(count);
    return detail::make_op(
        {1}, {total * inv_count}, {logits},
        [probs, gold_flat, mask_copy, inv_count, V](detail::TensorImpl& self) {
            auto& in = *self.inputs[0];
            if (!in.requires_grad) return;
            const double g = self.adj[0] * inv_count;
            for (std::size_t pos = 0; pos < mask_copy.size(); ++pos) {
                if (!mask_copy[pos]) continue;
                const double* prow = probs->data() + pos * V;
                double* arow = in.adj.data() + pos * V;
                for (std::size_t v = 0; v < V; ++v) arow[v] += g * prow[v];
                arow[static_cast<std::size_t>(gold_flat[pos])] -= g;
            }
        });
}

// --- optimizer ---------------------------------------------------------------------

void Adam::step(std::span<Parameter> params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (Parameter& p : params) {
        if (!p.tensor.has_grad())
            throw ContractError("adam: missing gradient for parameter '" + p.name + "'");
        AdamSlot& slot = slots_[p.name];
        const std::size_t n = p.tensor.numel();
        if (slot.m.size() != n) {
            slot.m.assign(n, 0.0);
            slot.v.assign(n, 0.0);
        }
        auto theta = p.tensor.data();
        auto grad = p.tensor.grad();
        for (std::size_t i = 0; i < n; ++i) {
            const double g = grad[i];
            slot.m[i] = cfg_.beta1 * slot.m[i] + (1.0 - cfg_.beta1) * g;
            slot.v[i] = cfg_.beta2 * slot.v[i] + (1.0 - cfg_.beta2) * g * g;
            const double m_hat = slot.m[i] / bc1;
            const double v_hat = slot.v[i] / bc2;
            theta[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
        }
        p.tensor.zero_grad();
    }
}

void Adam::restore(std::uint64_t t, std::map<std::string, AdamSlot> slots) {
    t_ = t;
    slots_ = std::move(slots);
}

// --- early stopping -----------------------------------------------------------------

std::string format_epoch_line(const EpochLog& entry) {
    char line[160];
    std::snprintf(line, sizeof(line), "epoch=%zu train_loss=%.6f val_loss=%.6f seconds=%.3f",
                  entry.epoch, entry.train_loss, entry.val_loss, entry.seconds);
    return line;
}

StopSignal early_stop_check(EarlyStopState& state, double val_loss) {
    if (val_loss < state.best_val_loss - state.min_delta) {
        state.best_val_loss = val_loss;
        state.epochs_since_improvement = 0;
    } else {
        ++state.epochs_since_improvement;
    }
    return state.epochs_since_improvement >= state.patience ? StopSignal::stop
                                                            : StopSignal::proceed;
}

// --- training loop ------------------------------------------------------------------

Trainer::Trainer(models::Seq2SeqModel& model, Adam& adam, TrainOptions opts)
    : model_(model), adam_(adam), opts_(opts), shuffle_rng_(opts.seed) {}

std::string Trainer::rng_state() const {
    std::ostringstream os;
    os << shuffle_rng_;
    return os.str();
}

void Trainer::set_rng_state(const std::string& state) {
    std::istringstream is(state);
    is >> shuffle_rng_;
    if (is.fail()) throw FormatError("trainer: bad shuffle-rng state");
}

double Trainer::run_batch(const data::Batch& batch, bool train, std::size_t index) {
    Tensor logits = model_.forward_teacher_forced(batch);
    LossTargets targets = shift_targets(batch);
    Tensor loss = cross_entropy_loss(logits, targets.gold, targets.mask);
    const double value = loss.item();
    if (!std::isfinite(value)) {
        loss.backward();
        double grad_norm_sq = 0.0;
        for (const Parameter& p : model_.parameters()) {
            if (!p.tensor.has_grad()) continue;
            for (double g : p.tensor.grad()) grad_norm_sq += g * g;
        }
        throw DivergenceError("training: non-finite loss at batch " + std::to_string(index) +
                              " (global grad norm " + std::to_string(std::sqrt(grad_norm_sq)) +
                              ")");
    }
    if (train) {
        loss.backward();
        if (opts_.clip_norm > 0.0) {
            double norm_sq = 0.0;
            for (Parameter& p : model_.parameters())
                for (double g : p.tensor.grad()) norm_sq += g * g;
            const double norm = std::sqrt(norm_sq);
            if (norm > opts_.clip_norm) {
                const double factor = opts_.clip_norm / norm;
                for (Parameter& p : model_.parameters())
                    for (double& g : p.tensor.grad()) g *= factor;
            }
        }
        adam_.step(model_.parameters());
    }
    return value;
}

namespace {

// number of loss-bearing positions in a batch (everything after BOS per row)
std::size_t scored_tokens(const data::Batch& batch) {
    std::size_t count = 0;
    for (std::size_t len : batch.tgt_lengths) count += len - 1;
    return count;
}

}  // namespace

double Trainer::train_epoch(std::span<const data::Batch> batches) {
    if (batches.empty()) throw ContractError("train_epoch: no batches");
    std::vector<std::size_t> order(batches.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng_);

    model_.zero_grads();
    double weighted = 0.0;
    std::size_t tokens = 0;
    for (std::size_t i : order) {
        const double loss = run_batch(batches[i], true, i);
        const std::size_t n = scored_tokens(batches[i]);
        weighted += loss * static_cast<double>(n);
        tokens += n;
    }
    ++epochs_done_;
    return weighted / static_cast<double>(tokens);
}

double Trainer::eval_loss(std::span<const data::Batch> batches) {
    if (batches.empty()) throw ContractError("eval_loss: no batches");
    double weighted = 0.0;
    std::size_t tokens = 0;
    for (std::size_t i = 0; i < batches.size(); ++i) {
        const double loss = run_batch(batches[i], false, i);
        const std::size_t n = scored_tokens(batches[i]);
        weighted += loss * static_cast<double>(n);
        tokens += n;
    }
    return weighted / static_cast<double>(tokens);
}

TrainResult Trainer::fit(std::span<const data::Batch> train, std::span<const data::Batch> val,
                         std::ostream* log_out) {
    EarlyStopState es{.best_val_loss = std::numeric_limits<double>::infinity(),
                      .epochs_since_improvement = 0,
                      .patience = opts_.patience,
                      .min_delta = opts_.min_delta};
    TrainResult result;

    for (std::size_t epoch = 1; epoch <= opts_.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double train_loss = train_epoch(train);
        const double val_loss = eval_loss(val);
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        result.log.push_back({epoch, train_loss, val_loss, seconds});
        if (log_out) *log_out << format_epoch_line(result.log.back()) << '\n' << std::flush;

        const StopSignal signal = early_stop_check(es, val_loss);
        if (es.just_improved()) {
            result.best_epoch = epoch;
            result.best_val_loss = val_loss;
            result.best_checkpoint = serialize_checkpoint(
                model_, &adam_, static_cast<std::uint32_t>(epoch), opts_.seed, rng_state());
        }
        if (signal == StopSignal::stop) {
            result.stopped_early = true;
            break;
        }
    }

    if (!result.best_checkpoint.empty()) {
        Checkpoint best = parse_checkpoint(result.best_checkpoint);
        apply_checkpoint(best, model_);
        restore_adam(best, adam_);
    }
    return result;
}

}  // namespace miniformer::training
