#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "miniformer/cli.hpp"
#include "miniformer/error.hpp"

using namespace miniformer;
using namespace miniformer::cli;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::trunc);
    f << content;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

// tiny copy corpus: n pairs over a small vocabulary
void write_copy_corpus(const std::string& src, const std::string& tgt, std::size_t n,
                       std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::ostringstream s;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t len = 2 + rng() % 4;
        for (std::size_t j = 0; j < len; ++j) {
            if (j) s << ' ';
            s << "w" << rng() % 6;
        }
        s << '\n';
    }
    write_file(src, s.str());
    write_file(tgt, read_file(src));
}

}  // namespace

TEST_CASE("run config parsing, defaults and rejection of unknown keys") {
    RunConfig cfg = parse_run_config_text("model = transformer\nd_hidden=16 # comment\n", "test");
    CHECK(cfg.model == "transformer");
    CHECK(cfg.d_hidden == 16);
    CHECK(cfg.batch_size == 32);   // default
    CHECK(cfg.lr == 1e-3);         // default
    CHECK(cfg.max_epochs == 50);   // default

    CHECK_THROWS_WITH_AS(parse_run_config_text("typo_key = 1\n", "test"),
                         doctest::Contains("typo_key"), ConfigError);
    CHECK_THROWS_AS(parse_run_config_text("d_hidden = banana\n", "test"), ConfigError);
    CHECK_THROWS_AS(parse_run_config_text("just a line\n", "test"), ConfigError);
}

TEST_CASE("config validation catches bad setups") {
    RunConfig cfg;
    cfg.model = "gru";
    CHECK_THROWS_AS(validate_config(cfg, false, false), ConfigError);

    RunConfig heads;
    heads.d_model = 64;
    heads.n_heads = 5;
    CHECK_THROWS_AS(validate_config(heads, false, false), ConfigError);

    RunConfig paths;
    paths.data_src = "/nonexistent/a.src";
    paths.data_tgt = "/nonexistent/a.tgt";
    CHECK_THROWS_AS(validate_config(paths, true, false), IoError);

    RunConfig ok;
    CHECK_NOTHROW(validate_config(ok, false, false));
}

TEST_CASE("MINIFORMER_SEED overrides the configured seed") {
    setenv("MINIFORMER_SEED", "777", 1);
    RunConfig cfg = parse_run_config_text("seed = 3\n", "test");
    CHECK(cfg.seed == 777);
    unsetenv("MINIFORMER_SEED");
    RunConfig cfg2 = parse_run_config_text("seed = 3\n", "test");
    CHECK(cfg2.seed == 3);
}

TEST_CASE("resolved_text echoes every key") {
    RunConfig cfg;
    std::string text = resolved_text(cfg);
    for (const char* key :
         {"model", "data_src", "seed", "d_hidden", "d_model", "lr", "batch_size", "patience",
          "val_fraction", "ffn_activation", "clip_norm"})
        CHECK(text.find(std::string(key) + " = ") != std::string::npos);
    // the echo itself parses back
    RunConfig cfg2 = parse_run_config_text(text, "resolved");
    CHECK(cfg2.batch_size == cfg.batch_size);
}

TEST_CASE("cmd_train exit codes for config and data problems") {
    std::ostringstream out, err;
    CHECK(cmd_train("/nonexistent/config.cfg", out, err) == 2);
    CHECK(err.str().find("error:") == 0);

    TempDir dir("mf_cli_train_err");
    write_file(dir.file("bad.cfg"), "unknown_key = 1\n");
    std::ostringstream out2, err2;
    CHECK(cmd_train(dir.file("bad.cfg"), out2, err2) == 2);

    // valid config but missing corpus: data error with the path in the message
    write_file(dir.file("nodata.cfg"), "model = miniformer\ndata_src = " + dir.file("no.src") +
                                           "\ndata_tgt = " + dir.file("no.tgt") +
                                           "\nout_dir = " + dir.file("out") + "\n");
    std::ostringstream out3, err3;
    CHECK(cmd_train(dir.file("nodata.cfg"), out3, err3) == 3);
    CHECK(err3.str().find("no.src") != std::string::npos);

    // a frequency floor that empties the vocabulary is a config error
    write_copy_corpus(dir.file("tiny.src"), dir.file("tiny.tgt"), 30, 4);
    write_file(dir.file("emptyvocab.cfg"),
               "model = miniformer\ndata_src = " + dir.file("tiny.src") +
                   "\ndata_tgt = " + dir.file("tiny.tgt") + "\nout_dir = " + dir.file("out") +
                   "\nvocab_min_freq = 100000\nd_embed = 8\nd_hidden = 8\nmax_epochs = 1\n");
    std::ostringstream out4, err4;
    CHECK(cmd_train(dir.file("emptyvocab.cfg"), out4, err4) == 2);
}

TEST_CASE("train then translate then score composes end to end") {
    TempDir dir("mf_cli_pipeline");
    write_copy_corpus(dir.file("toy.src"), dir.file("toy.tgt"), 60, 5);
    write_file(dir.file("run.cfg"), "model = miniformer\n"
                                    "data_src = " + dir.file("toy.src") + "\n"
                                    "data_tgt = " + dir.file("toy.tgt") + "\n"
                                    "out_dir = " + dir.file("out") + "\n"
                                    "seed = 11\n"
                                    "d_embed = 8\nd_hidden = 8\n"
                                    "batch_size = 8\nmax_epochs = 2\n");
    std::ostringstream out, err;
    REQUIRE(cmd_train(dir.file("run.cfg"), out, err) == 0);
    CHECK(fs::exists(dir.file("out/checkpoint.bin")));
    CHECK(fs::exists(dir.file("out/vocab.src")));
    CHECK(fs::exists(dir.file("out/vocab.tgt")));
    CHECK(fs::exists(dir.file("out/train.log")));
    CHECK(fs::exists(dir.file("out/config.resolved")));
    CHECK(fs::exists(dir.file("out/test.src")));
    CHECK(fs::exists(dir.file("out/test.tgt")));

    // train.log: one epoch=... line per epoch
    std::istringstream log(read_file(dir.file("out/train.log")));
    std::string line;
    std::size_t epochs = 0;
    while (std::getline(log, line))
        if (line.rfind("epoch=", 0) == 0) ++epochs;
    CHECK(epochs == 2);

    // translate the held-out sources: line count preserved
    std::ostringstream tout, terr;
    REQUIRE(cmd_translate(dir.file("out/checkpoint.bin"), dir.file("out/test.src"),
                          dir.file("out/hyp.txt"), 0, tout, terr) == 0);
    std::istringstream src_lines(read_file(dir.file("out/test.src")));
    std::istringstream hyp_lines(read_file(dir.file("out/hyp.txt")));
    std::size_t n_src = 0, n_hyp = 0;
    while (std::getline(src_lines, line)) ++n_src;
    while (std::getline(hyp_lines, line)) ++n_hyp;
    CHECK(n_src == n_hyp);

    // score the hypotheses against the held-out references
    std::ostringstream sout, serr;
    REQUIRE(cmd_score(dir.file("out/hyp.txt"), dir.file("out/test.tgt"), false, false, sout,
                      serr) == 0);
    CHECK(sout.str().find("bleu1=") != std::string::npos);
    CHECK(sout.str().find("rougeL_f=") != std::string::npos);
}

TEST_CASE("translate handles empty input and missing vocab") {
    TempDir dir("mf_cli_translate");
    write_copy_corpus(dir.file("toy.src"), dir.file("toy.tgt"), 40, 6);
    write_file(dir.file("run.cfg"), "model = miniformer\n"
                                    "data_src = " + dir.file("toy.src") + "\n"
                                    "data_tgt = " + dir.file("toy.tgt") + "\n"
                                    "out_dir = " + dir.file("out") + "\n"
                                    "d_embed = 8\nd_hidden = 8\nbatch_size = 8\nmax_epochs = 1\n");
    std::ostringstream out, err;
    REQUIRE(cmd_train(dir.file("run.cfg"), out, err) == 0);

    write_file(dir.file("empty.txt"), "");
    std::ostringstream tout, terr;
    CHECK(cmd_translate(dir.file("out/checkpoint.bin"), dir.file("empty.txt"),
                        dir.file("empty_out.txt"), 0, tout, terr) == 0);
    CHECK(read_file(dir.file("empty_out.txt")).empty());

    // vocab/checkpoint mismatch: tamper with the source vocab file
    write_file(dir.file("out/vocab.src"), "only\n");
    std::ostringstream t2out, t2err;
    CHECK(cmd_translate(dir.file("out/checkpoint.bin"), dir.file("empty.txt"),
                        dir.file("x.txt"), 0, t2out, t2err) == 2);

    std::ostringstream t3out, t3err;
    CHECK(cmd_translate(dir.file("missing.bin"), dir.file("empty.txt"), dir.file("x.txt"), 0,
                        t3out, t3err) == 3);
}

TEST_CASE("score on identical files prints 1.0000 everywhere") {
    TempDir dir("mf_cli_score");
    write_file(dir.file("ref.txt"), "the cat sat\na b c d\n");
    std::ostringstream out, err;
    REQUIRE(cmd_score(dir.file("ref.txt"), dir.file("ref.txt"), false, false, out, err) == 0);
    std::istringstream is(out.str());
    std::string line;
    std::size_t kv_lines = 0;
    while (std::getline(is, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos || line.find(' ') != std::string::npos) continue;
        CHECK(line.substr(eq + 1) == "1.0000");
        ++kv_lines;
    }
    CHECK(kv_lines == 13);
}

TEST_CASE("score fixture values match the hand oracle to 4 decimals") {
    TempDir dir("mf_cli_fixture");
    write_file(dir.file("hyp.txt"), "the cat sat\nthe the the\na b c d\n");
    write_file(dir.file("ref.txt"), "the cat sat down\nthe cat\na c b d\n");
    std::ostringstream out, err;
    REQUIRE(cmd_score(dir.file("hyp.txt"), dir.file("ref.txt"), false, false, out, err) == 0);
    const std::string text = out.str();
    CHECK(text.find("bleu1=0.8000") != std::string::npos);
    CHECK(text.find("bleu2=0.2857") != std::string::npos);
    CHECK(text.find("bleu3=0.2500") != std::string::npos);
    CHECK(text.find("bleu4=0.0000") != std::string::npos);
    CHECK(text.find("rouge1_f=0.8000") != std::string::npos);
    CHECK(text.find("rouge2_f=0.2857") != std::string::npos);
    CHECK(text.find("rougeL_f=0.7000") != std::string::npos);

    // line-count mismatch is a usage error with both counts reported
    write_file(dir.file("short.txt"), "one line\n");
    std::ostringstream out2, err2;
    CHECK(cmd_score(dir.file("hyp.txt"), dir.file("short.txt"), false, false, out2, err2) == 2);
    CHECK(err2.str().find("3") != std::string::npos);
    CHECK(err2.str().find("1") != std::string::npos);

    // cumulative and sentence flags still produce full reports
    std::ostringstream out3, err3;
    REQUIRE(cmd_score(dir.file("hyp.txt"), dir.file("ref.txt"), true, true, out3, err3) == 0);
    CHECK(out3.str().find("bleu4=") != std::string::npos);
}

TEST_CASE("cmd_params reports counts and a sub-1 ratio") {
    TempDir dir("mf_cli_params");
    write_copy_corpus(dir.file("toy.src"), dir.file("toy.tgt"), 40, 7);
    write_file(dir.file("run.cfg"), "model = miniformer\n"
                                    "data_src = " + dir.file("toy.src") + "\n"
                                    "data_tgt = " + dir.file("toy.tgt") + "\n"
                                    "d_embed = 32\nd_hidden = 32\n");
    std::ostringstream out, err;
    REQUIRE(cmd_params(dir.file("run.cfg"), out, err) == 0);
    const std::string text = out.str();
    CHECK(text.find("model=miniformer params=") != std::string::npos);
    CHECK(text.find("model=transformer params=") != std::string::npos);
    CHECK(text.find("encoder=") != std::string::npos);

    auto ratio_pos = text.find("ratio=");
    REQUIRE(ratio_pos != std::string::npos);
    const double ratio = std::stod(text.substr(ratio_pos + 6));
    CHECK(ratio < 1.0);
    CHECK(ratio > 0.0);
    // three decimals
    const std::string ratio_str = text.substr(ratio_pos + 6);
    CHECK(ratio_str.find('.') == 1);
    CHECK(ratio_str.substr(0, ratio_str.find('\n')).size() == 5);

    // doubling d_hidden increases both counts
    write_file(dir.file("wide.cfg"), "model = miniformer\n"
                                     "data_src = " + dir.file("toy.src") + "\n"
                                     "data_tgt = " + dir.file("toy.tgt") + "\n"
                                     "d_embed = 32\nd_hidden = 64\n");
    std::ostringstream out2, err2;
    REQUIRE(cmd_params(dir.file("wide.cfg"), out2, err2) == 0);
    auto count_of = [](const std::string& s, const std::string& tag) {
        auto pos = s.find(tag);
        REQUIRE(pos != std::string::npos);
        return std::stoull(s.substr(pos + tag.size()));
    };
    CHECK(count_of(out2.str(), "model=miniformer params=") >
          count_of(text, "model=miniformer params="));
    CHECK(count_of(out2.str(), "model=transformer params=") >
          count_of(text, "model=transformer params="));

    std::ostringstream out3, err3;
    CHECK(cmd_params("/nonexistent.cfg", out3, err3) == 2);
}

TEST_CASE("same seed reproduces the checkpoint byte for byte") {
    TempDir dir("mf_cli_determinism");
    write_copy_corpus(dir.file("toy.src"), dir.file("toy.tgt"), 50, 8);
    auto cfg_for = [&](const std::string& out_name) {
        return "model = miniformer\n"
               "data_src = " + dir.file("toy.src") + "\n"
               "data_tgt = " + dir.file("toy.tgt") + "\n"
               "out_dir = " + dir.file(out_name) + "\n"
               "seed = 21\nd_embed = 8\nd_hidden = 8\nbatch_size = 8\nmax_epochs = 2\n";
    };
    write_file(dir.file("a.cfg"), cfg_for("out_a"));
    write_file(dir.file("b.cfg"), cfg_for("out_b"));
    std::ostringstream oa, ea, ob, eb;
    REQUIRE(cmd_train(dir.file("a.cfg"), oa, ea) == 0);
    REQUIRE(cmd_train(dir.file("b.cfg"), ob, eb) == 0);
    CHECK(read_file(dir.file("out_a/checkpoint.bin")) == read_file(dir.file("out_b/checkpoint.bin")));
}
