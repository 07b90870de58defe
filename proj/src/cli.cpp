#include "miniformer/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include "miniformer/data.hpp"
#include "miniformer/error.hpp"
#include "miniformer/metrics.hpp"
#include "miniformer/model.hpp"
#include "miniformer/training.hpp"

namespace miniformer::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& value) {
    try {
        return static_cast<std::size_t>(std::stoull(value));
    } catch (const std::exception&) {
        throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + value +
                          "'");
    }
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
    try {
        return std::stoull(value);
    } catch (const std::exception&) {
        throw ConfigError("config: '" + key + "' expects an integer, got '" + value + "'");
    }
}

double to_double(const std::string& key, const std::string& value) {
    try {
        return std::stod(value);
    } catch (const std::exception&) {
        throw ConfigError("config: '" + key + "' expects a number, got '" + value + "'");
    }
}

layers::FfnActivation activation_from(const std::string& name) {
    if (name == "none") return layers::FfnActivation::none;
    if (name == "relu") return layers::FfnActivation::relu;
    throw ConfigError("config: ffn_activation must be none or relu, got '" + name + "'");
}

models::MiniFormerConfig miniformer_config(const RunConfig& cfg, std::size_t vocab_src,
                                           std::size_t vocab_tgt) {
    models::MiniFormerConfig mc;
    mc.vocab_src = vocab_src;
    mc.vocab_tgt = vocab_tgt;
    mc.d_embed = cfg.d_embed;
    mc.d_hidden = cfg.d_hidden;
    mc.max_len = cfg.max_len;
    mc.ffn_activation = activation_from(cfg.ffn_activation);
    return mc;
}

models::TransformerConfig transformer_config(const RunConfig& cfg, std::size_t vocab_src,
                                             std::size_t vocab_tgt, std::size_t d_model) {
    models::TransformerConfig tc;
    tc.vocab_src = vocab_src;
    tc.vocab_tgt = vocab_tgt;
    tc.d_model = d_model;
    tc.n_heads = cfg.n_heads;
    tc.d_ff = cfg.d_ff;
    tc.n_layers_enc = cfg.n_layers;
    tc.n_layers_dec = cfg.n_layers;
    tc.max_len = cfg.max_len;
    tc.ffn_activation = activation_from(cfg.ffn_activation);
    return tc;
}

}  // namespace

RunConfig parse_run_config_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters = {
        {"model", [&](const std::string&, const std::string& v) { cfg.model = v; }},
        {"data_src", [&](const std::string&, const std::string& v) { cfg.data_src = v; }},
        {"data_tgt", [&](const std::string&, const std::string& v) { cfg.data_tgt = v; }},
        {"out_dir", [&](const std::string&, const std::string& v) { cfg.out_dir = v; }},
        {"seed", [&](const std::string& k, const std::string& v) { cfg.seed = to_u64(k, v); }},
        {"d_embed",
         [&](const std::string& k, const std::string& v) { cfg.d_embed = to_size(k, v); }},
        {"d_hidden",
         [&](const std::string& k, const std::string& v) { cfg.d_hidden = to_size(k, v); }},
        {"d_model",
         [&](const std::string& k, const std::string& v) { cfg.d_model = to_size(k, v); }},
        {"n_heads",
         [&](const std::string& k, const std::string& v) { cfg.n_heads = to_size(k, v); }},
        {"d_ff", [&](const std::string& k, const std::string& v) { cfg.d_ff = to_size(k, v); }},
        {"n_layers",
         [&](const std::string& k, const std::string& v) { cfg.n_layers = to_size(k, v); }},
        {"max_len",
         [&](const std::string& k, const std::string& v) { cfg.max_len = to_size(k, v); }},
        {"ffn_activation",
         [&](const std::string&, const std::string& v) { cfg.ffn_activation = v; }},
        {"vocab_max_size",
         [&](const std::string& k, const std::string& v) { cfg.vocab_max_size = to_size(k, v); }},
        {"vocab_min_freq",
         [&](const std::string& k, const std::string& v) { cfg.vocab_min_freq = to_size(k, v); }},
        {"lr", [&](const std::string& k, const std::string& v) { cfg.lr = to_double(k, v); }},
        {"batch_size",
         [&](const std::string& k, const std::string& v) { cfg.batch_size = to_size(k, v); }},
        {"max_epochs",
         [&](const std::string& k, const std::string& v) { cfg.max_epochs = to_size(k, v); }},
        {"patience",
         [&](const std::string& k, const std::string& v) { cfg.patience = to_size(k, v); }},
        {"min_delta",
         [&](const std::string& k, const std::string& v) { cfg.min_delta = to_double(k, v); }},
        {"clip_norm",
         [&](const std::string& k, const std::string& v) { cfg.clip_norm = to_double(k, v); }},
        {"val_fraction",
         [&](const std::string& k, const std::string& v) { cfg.val_fraction = to_double(k, v); }},
    };

    std::istringstream is(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: " + origin + ":" + std::to_string(line_no) +
                              ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        auto it = setters.find(key);
        if (it == setters.end())
            throw ConfigError("config: " + origin + ":" + std::to_string(line_no) +
                              ": unknown key '" + key + "'");
        it->second(key, value);
    }

    if (const char* env_seed = std::getenv("MINIFORMER_SEED"))
        cfg.seed = to_u64("MINIFORMER_SEED", env_seed);
    return cfg;
}

RunConfig parse_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot read " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_run_config_text(text, path);
}

void validate_config(const RunConfig& cfg, bool need_data, bool need_out_dir) {
    if (cfg.model != "miniformer" && cfg.model != "transformer")
        throw ConfigError("config: model must be miniformer or transformer, got '" + cfg.model +
                          "'");
    if (cfg.d_embed == 0 || cfg.d_hidden == 0 || cfg.d_model == 0 || cfg.d_ff == 0 ||
        cfg.n_layers == 0 || cfg.max_len == 0)
        throw ConfigError("config: model dimensions must be positive");
    if (cfg.n_heads == 0 || cfg.d_model % cfg.n_heads != 0)
        throw ConfigError("config: d_model " + std::to_string(cfg.d_model) +
                          " not divisible by n_heads " + std::to_string(cfg.n_heads));
    if (cfg.batch_size == 0) throw ConfigError("config: batch_size must be >= 1");
    if (cfg.max_epochs == 0) throw ConfigError("config: max_epochs must be >= 1");
    if (cfg.lr <= 0.0) throw ConfigError("config: lr must be positive");
    if (cfg.vocab_max_size <= 4)
        throw ConfigError("config: vocab_max_size must exceed the 4 reserved ids");
    if (cfg.val_fraction < 0.0 || cfg.val_fraction > 0.5)
        throw ConfigError("config: val_fraction must lie in [0, 0.5]");
    activation_from(cfg.ffn_activation);
    if (need_data) {
        if (cfg.data_src.empty() || cfg.data_tgt.empty())
            throw ConfigError("config: data_src and data_tgt are required");
        for (const std::string& p : {cfg.data_src, cfg.data_tgt})
            if (!fs::exists(p)) throw IoError("config: corpus file does not exist: " + p);
    }
    if (need_out_dir && cfg.out_dir.empty()) throw ConfigError("config: out_dir is required");
}

std::string resolved_text(const RunConfig& cfg) {
    std::ostringstream os;
    os << "model = " << cfg.model << "\n";
    os << "data_src = " << cfg.data_src << "\n";
    os << "data_tgt = " << cfg.data_tgt << "\n";
    os << "out_dir = " << cfg.out_dir << "\n";
    os << "seed = " << cfg.seed << "\n";
    os << "d_embed = " << cfg.d_embed << "\n";
    os << "d_hidden = " << cfg.d_hidden << "\n";
    os << "d_model = " << cfg.d_model << "\n";
    os << "n_heads = " << cfg.n_heads << "\n";
    os << "d_ff = " << cfg.d_ff << "\n";
    os << "n_layers = " << cfg.n_layers << "\n";
    os << "max_len = " << cfg.max_len << "\n";
    os << "ffn_activation = " << cfg.ffn_activation << "\n";
    os << "vocab_max_size = " << cfg.vocab_max_size << "\n";
    os << "vocab_min_freq = " << cfg.vocab_min_freq << "\n";
    os << "lr = " << cfg.lr << "\n";
    os << "batch_size = " << cfg.batch_size << "\n";
    os << "max_epochs = " << cfg.max_epochs << "\n";
    os << "patience = " << cfg.patience << "\n";
    os << "min_delta = " << cfg.min_delta << "\n";
    os << "clip_norm = " << cfg.clip_norm << "\n";
    os << "val_fraction = " << cfg.val_fraction << "\n";
    return os.str();
}

namespace {

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f << content;
    if (!f) throw IoError("short write to " + path.string());
}

void write_binary_file(const fs::path& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("short write to " + path.string());
}

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

void write_corpus_side(const fs::path& path, const data::ParallelCorpus& corpus, bool source) {
    std::ostringstream os;
    for (const auto& pair : corpus.pairs) os << join_tokens(source ? pair.src : pair.tgt) << "\n";
    write_text_file(path, os.str());
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

}  // namespace

int cmd_train(const std::string& config_path, std::ostream& out, std::ostream& err) {
    RunConfig cfg;
    try {
        cfg = parse_run_config(config_path);
        validate_config(cfg, true, true);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    }

    data::ParallelCorpus train_corpus, val_corpus, test_corpus;
    data::Vocab vocab_src, vocab_tgt;
    std::vector<data::Batch> train_batches, val_batches;
    try {
        data::ParallelCorpus corpus = data::load_parallel(cfg.data_src, cfg.data_tgt);
        auto [train_full, test] = data::split_corpus(corpus, cfg.seed);
        test_corpus = std::move(test);
        auto [train_part, val_part] =
            data::split_fraction(train_full, 1.0 - cfg.val_fraction, cfg.seed + 1);
        train_corpus = std::move(train_part);
        val_corpus = std::move(val_part);
        if (train_corpus.pairs.empty() || val_corpus.pairs.empty())
            throw ContractError("train/validation split is empty; corpus too small");

        std::vector<std::vector<std::string>> src_sents, tgt_sents;
        for (const auto& p : train_full.pairs) {
            src_sents.push_back(p.src);
            tgt_sents.push_back(p.tgt);
        }
        vocab_src = data::build_vocab(src_sents, cfg.vocab_max_size, cfg.vocab_min_freq);
        vocab_tgt = data::build_vocab(tgt_sents, cfg.vocab_max_size, cfg.vocab_min_freq);

        std::size_t dropped_train = 0, dropped_val = 0;
        train_batches = data::make_batches(train_corpus, vocab_src, vocab_tgt, cfg.batch_size,
                                           cfg.max_len, &dropped_train);
        val_batches = data::make_batches(val_corpus, vocab_src, vocab_tgt, cfg.batch_size,
                                         cfg.max_len, &dropped_val);
        if (dropped_train + dropped_val > 0)
            out << "dropped " << dropped_train + dropped_val << " pairs longer than max_len="
                << cfg.max_len << "\n";
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const ContractError& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const FormatError& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    }

    try {
        fs::create_directories(cfg.out_dir);
        const fs::path out_dir(cfg.out_dir);

        std::unique_ptr<models::Seq2SeqModel> model;
        if (cfg.model == "miniformer") {
            model = std::make_unique<models::MiniFormer>(
                miniformer_config(cfg, vocab_src.size(), vocab_tgt.size()), cfg.seed);
        } else {
            model = std::make_unique<models::Transformer>(
                transformer_config(cfg, vocab_src.size(), vocab_tgt.size(), cfg.d_model),
                cfg.seed);
        }
        out << "model=" << cfg.model << " params=" << models::count_params(*model)
            << " train_pairs=" << train_corpus.pairs.size()
            << " val_pairs=" << val_corpus.pairs.size()
            << " test_pairs=" << test_corpus.pairs.size() << "\n";

        training::Adam adam({.lr = cfg.lr});
        training::TrainOptions opts{.max_epochs = cfg.max_epochs,
                                    .patience = cfg.patience,
                                    .min_delta = cfg.min_delta,
                                    .clip_norm = cfg.clip_norm,
                                    .seed = cfg.seed};
        training::Trainer trainer(*model, adam, opts);

        training::TrainResult result = trainer.fit(train_batches, val_batches, &out);

        const std::string checkpoint_path = (out_dir / "checkpoint.bin").string();
        if (!result.best_checkpoint.empty()) {
            const std::string tmp = checkpoint_path + ".tmp";
            write_binary_file(tmp, result.best_checkpoint);
            fs::rename(tmp, checkpoint_path);
        } else {
            training::save_checkpoint(checkpoint_path, *model, &adam, 0, cfg.seed,
                                      trainer.rng_state());
        }
        vocab_src.save((out_dir / "vocab.src").string());
        vocab_tgt.save((out_dir / "vocab.tgt").string());
        std::ostringstream log_text;
        for (const training::EpochLog& entry : result.log)
            log_text << training::format_epoch_line(entry) << '\n';
        write_text_file(out_dir / "train.log", log_text.str());
        write_text_file(out_dir / "config.resolved", resolved_text(cfg));
        write_corpus_side(out_dir / "test.src", test_corpus, true);
        write_corpus_side(out_dir / "test.tgt", test_corpus, false);

        out << "best_epoch=" << result.best_epoch << " best_val_loss=" << result.best_val_loss
            << " checkpoint=" << checkpoint_path << "\n";
        return 0;
    } catch (const DivergenceError& e) {
        err << "error: " << e.what() << "\n";
        return 4;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const ContractError& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    }
}

int cmd_translate(const std::string& checkpoint_path, const std::string& input_path,
                  const std::string& output_path, std::size_t max_len, std::ostream& out,
                  std::ostream& err) {
    try {
        training::Checkpoint ck = training::load_checkpoint(checkpoint_path);
        auto model = training::model_from_checkpoint(ck);

        const fs::path dir = fs::path(checkpoint_path).parent_path();
        data::Vocab vocab_src = data::Vocab::load((dir / "vocab.src").string());
        data::Vocab vocab_tgt = data::Vocab::load((dir / "vocab.tgt").string());

        std::size_t expect_src = 0, expect_tgt = 0;
        if (ck.model_kind == "miniformer") {
            auto mc = models::MiniFormerConfig::from_text(ck.config_text);
            expect_src = mc.vocab_src;
            expect_tgt = mc.vocab_tgt;
        } else {
            auto tc = models::TransformerConfig::from_text(ck.config_text);
            expect_src = tc.vocab_src;
            expect_tgt = tc.vocab_tgt;
        }
        if (vocab_src.size() != expect_src || vocab_tgt.size() != expect_tgt)
            throw ConfigError("translate: vocab files beside the checkpoint hold " +
                              std::to_string(vocab_src.size()) + "/" +
                              std::to_string(vocab_tgt.size()) + " entries, model expects " +
                              std::to_string(expect_src) + "/" + std::to_string(expect_tgt));

        const std::size_t cap = max_len > 0 ? max_len : model->max_len();
        std::vector<std::string> lines = read_lines(input_path);
        std::ostringstream os;
        std::size_t translated = 0;
        for (const std::string& line : lines) {
            std::vector<std::string> tokens = data::tokenize(line);
            if (tokens.empty()) {
                os << "\n";
                continue;
            }
            std::vector<std::int32_t> ids(tokens.size());
            for (std::size_t i = 0; i < tokens.size(); ++i) ids[i] = vocab_src.encode(tokens[i]);
            std::vector<std::int32_t> out_ids = model->greedy_decode(ids, cap);
            std::vector<std::string> out_tokens(out_ids.size());
            for (std::size_t i = 0; i < out_ids.size(); ++i)
                out_tokens[i] = vocab_tgt.decode(out_ids[i]);
            os << join_tokens(out_tokens) << "\n";
            ++translated;
        }
        write_text_file(output_path, os.str());
        out << "translated " << translated << " of " << lines.size() << " lines to "
            << output_path << "\n";
        return 0;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    }
}

int cmd_score(const std::string& hyp_path, const std::string& ref_path, bool cumulative,
              bool sentence, std::ostream& out, std::ostream& err) {
    try {
        std::vector<std::string> hyp_lines = read_lines(hyp_path);
        std::vector<std::string> ref_lines = read_lines(ref_path);
        if (hyp_lines.size() != ref_lines.size()) {
            err << "error: score: line counts differ: " << hyp_lines.size() << " hypotheses vs "
                << ref_lines.size() << " references\n";
            return 2;
        }
        metrics::Corpus hyps, refs;
        for (const auto& line : hyp_lines) hyps.push_back(metrics::score_tokenize(line));
        for (const auto& line : ref_lines) refs.push_back(metrics::score_tokenize(line));

        metrics::MetricReport report = sentence
                                           ? metrics::evaluate_sentence_mean(hyps, refs, cumulative)
                                           : metrics::evaluate_corpus(hyps, refs, cumulative);
        out << metrics::format_table(report, "system");
        out << metrics::format_keyvalues(report);
        return 0;
    } catch (const ContractError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    }
}

int cmd_params(const std::string& config_path, std::ostream& out, std::ostream& err) {
    try {
        RunConfig cfg = parse_run_config(config_path);
        validate_config(cfg, true, false);

        data::ParallelCorpus corpus = data::load_parallel(cfg.data_src, cfg.data_tgt);
        auto [train_full, test] = data::split_corpus(corpus, cfg.seed);
        (void)test;
        std::vector<std::vector<std::string>> src_sents, tgt_sents;
        for (const auto& p : train_full.pairs) {
            src_sents.push_back(p.src);
            tgt_sents.push_back(p.tgt);
        }
        data::Vocab vocab_src =
            data::build_vocab(src_sents, cfg.vocab_max_size, cfg.vocab_min_freq);
        data::Vocab vocab_tgt =
            data::build_vocab(tgt_sents, cfg.vocab_max_size, cfg.vocab_min_freq);

        models::MiniFormer mini(miniformer_config(cfg, vocab_src.size(), vocab_tgt.size()),
                                cfg.seed);
        // matched baseline: d_model = 2 * d_hidden, equal embedding width
        models::Transformer matched(
            transformer_config(cfg, vocab_src.size(), vocab_tgt.size(), 2 * cfg.d_hidden),
            cfg.seed);

        auto print_model = [&](const char* name, const models::Seq2SeqModel& model) {
            out << "model=" << name << " params=" << models::count_params(model) << "\n";
            for (const auto& [group, count] : models::param_breakdown(model))
                out << "  " << group << "=" << count << "\n";
        };
        print_model("miniformer", mini);
        print_model("transformer", matched);

        const double ratio = static_cast<double>(models::count_params(mini)) /
                             static_cast<double>(models::count_params(matched));
        char line[64];
        std::snprintf(line, sizeof(line), "ratio=%.3f", ratio);
        out << line << "\n";
        return 0;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const ContractError& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace miniformer::cli
