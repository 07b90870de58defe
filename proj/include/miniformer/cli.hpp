#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

namespace miniformer::cli {

// Flat key=value run configuration; `#` starts a comment, unknown keys are
// rejected. Every field has a desk-scale default.
struct RunConfig {
    std::string model = "miniformer";  // miniformer | transformer
    std::string data_src;
    std::string data_tgt;
    std::string out_dir;
    std::uint64_t seed = 42;

    // miniformer dims
    std::size_t d_embed = 32;
    std::size_t d_hidden = 32;
    // transformer dims
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t d_ff = 256;
    std::size_t n_layers = 2;

    std::size_t max_len = 64;
    std::string ffn_activation = "none";  // none | relu

    std::size_t vocab_max_size = 10000;
    std::size_t vocab_min_freq = 1;

    double lr = 1e-3;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 50;
    std::size_t patience = 5;
    double min_delta = 1e-4;
    double clip_norm = 0.0;
    double val_fraction = 0.1;
};

// Reads and validates; the MINIFORMER_SEED environment variable overrides the
// configured seed.
RunConfig parse_run_config(const std::string& path);
RunConfig parse_run_config_text(const std::string& text, const std::string& origin);
void validate_config(const RunConfig& cfg, bool need_data, bool need_out_dir);
// The fully-defaulted config echoed back, one key per line.
std::string resolved_text(const RunConfig& cfg);

// Commands return process exit codes: 0 success, 2 config/format error,
// 3 data error, 4 training divergence.
int cmd_train(const std::string& config_path, std::ostream& out, std::ostream& err);
int cmd_translate(const std::string& checkpoint_path, const std::string& input_path,
                  const std::string& output_path, std::size_t max_len, std::ostream& out,
                  std::ostream& err);
int cmd_score(const std::string& hyp_path, const std::string& ref_path, bool cumulative,
              bool sentence, std::ostream& out, std::ostream& err);
int cmd_params(const std::string& config_path, std::ostream& out, std::ostream& err);

}  // namespace miniformer::cli
