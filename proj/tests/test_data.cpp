#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "miniformer/data.hpp"

using namespace miniformer;
using namespace miniformer::data;

namespace {

std::string join(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

ParallelCorpus synthetic_corpus(std::size_t n) {
    ParallelCorpus c;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::string> toks = {"tok" + std::to_string(i % 7),
                                         "tok" + std::to_string((i * 3) % 7)};
        c.pairs.push_back({toks, toks});
    }
    return c;
}

}  // namespace

TEST_CASE("tokenize lowercases and peels punctuation") {
    CHECK(tokenize("The cat.") == std::vector<std::string>{"the", "cat", "."});
    CHECK(tokenize("").empty());
    CHECK(tokenize("   ").empty());
    CHECK(tokenize("(Hello!)") == std::vector<std::string>{"(", "hello", "!", ")"});
    CHECK(tokenize("don't stop") == std::vector<std::string>{"don't", "stop"});
    CHECK(tokenize("3.14 ...") == std::vector<std::string>{"3.14", ".", ".", "."});
}

TEST_CASE("tokenize is idempotent") {
    std::mt19937_64 rng(41);
    const std::vector<std::string> lines = {
        "The quick (brown) fox -- jumped!!", "a.b.c, d;e:f", "...", "UPPER lower MiXeD.",
        "don't \"quote\" me"};
    for (const auto& line : lines) {
        auto once = tokenize(line);
        auto twice = tokenize(join(once));
        CHECK(once == twice);
    }
}

TEST_CASE("vocab reserves fixed ids and encodes unknowns to UNK") {
    Vocab v;
    CHECK(v.size() == 4);
    CHECK(v.encode("anything") == Vocab::kUnk);
    v.add("cat");
    CHECK(v.encode("cat") == 4);
    CHECK(v.decode(4) == "cat");
    CHECK(v.decode(Vocab::kPad) == "<pad>");
    CHECK_THROWS_AS(v.decode(99), IndexError);
}

TEST_CASE("build_vocab orders by frequency then lexicographically") {
    std::vector<std::vector<std::string>> sents = {{"a", "a", "a", "b"}, {"c", "c", "c"}};
    Vocab v = build_vocab(sents, 100, 1);
    // a and c tie at 3; lexicographic puts a first
    CHECK(v.encode("a") == 4);
    CHECK(v.encode("c") == 5);
    CHECK(v.encode("b") == 6);

    Vocab v2 = build_vocab({{"a", "a", "a", "b"}}, 100, 2);
    CHECK(v2.encode("a") == 4);
    CHECK(v2.encode("b") == Vocab::kUnk);
    CHECK(v2.size() == 5);

    Vocab v3 = build_vocab(sents, 5, 1);
    CHECK(v3.size() == 5);  // exactly one non-reserved token

    CHECK_THROWS_AS(build_vocab(sents, 4, 1), ContractError);

    // deterministic across runs
    Vocab v4 = build_vocab(sents, 100, 1);
    CHECK(v4.id_to_token == v.id_to_token);
}

TEST_CASE("vocab round-trips through its text file") {
    Vocab v;
    v.add("alpha");
    v.add("beta");
    auto path = std::filesystem::temp_directory_path() / "mf_vocab_test.txt";
    v.save(path.string());
    Vocab loaded = Vocab::load(path.string());
    CHECK(loaded.id_to_token == v.id_to_token);
    CHECK(loaded.encode("beta") == 5);
    std::filesystem::remove(path);
}

TEST_CASE("split_corpus partitions 4:1 deterministically") {
    ParallelCorpus c = synthetic_corpus(10);
    auto [train, test] = split_corpus(c, 7);
    CHECK(train.pairs.size() == 8);
    CHECK(test.pairs.size() == 2);

    auto [train2, test2] = split_corpus(c, 7);
    REQUIRE(train2.pairs.size() == train.pairs.size());
    for (std::size_t i = 0; i < train.pairs.size(); ++i)
        CHECK(train.pairs[i].src == train2.pairs[i].src);

    // partition: every pair lands exactly once
    auto key = [](const SentencePair& p) { return join(p.src) + "|" + join(p.tgt); };
    std::multiset<std::string> all;
    for (const auto& p : c.pairs) all.insert(key(p));
    std::multiset<std::string> split;
    for (const auto& p : train.pairs) split.insert(key(p));
    for (const auto& p : test.pairs) split.insert(key(p));
    CHECK(all == split);

    CHECK_THROWS_AS(split_corpus(synthetic_corpus(4), 1), ContractError);
}

TEST_CASE("make_batches shapes, padding and special tokens") {
    ParallelCorpus c = synthetic_corpus(65);
    Vocab v = build_vocab({{"tok0", "tok1", "tok2", "tok3", "tok4", "tok5", "tok6"}}, 100, 1);
    auto batches = make_batches(c, v, v, 32, 64);
    REQUIRE(batches.size() == 3);
    CHECK(batches[0].batch_size() == 32);
    CHECK(batches[1].batch_size() == 32);
    CHECK(batches[2].batch_size() == 1);

    for (const auto& batch : batches) {
        for (std::size_t b = 0; b < batch.batch_size(); ++b) {
            CHECK(batch.tgt_ids.at(b, 0) == Vocab::kBos);
            std::size_t eos_count = 0;
            for (std::size_t t = 0; t < batch.tgt_ids.cols; ++t) {
                if (batch.tgt_ids.at(b, t) == Vocab::kEos) ++eos_count;
                if (t >= batch.tgt_lengths[b]) CHECK(batch.tgt_ids.at(b, t) == Vocab::kPad);
            }
            CHECK(eos_count == 1);
            for (std::size_t s = 0; s < batch.src_ids.cols; ++s) {
                const bool valid = s < batch.src_lengths[b];
                CHECK(batch.src_pad_mask[b * batch.src_ids.cols + s] == (valid ? 1 : 0));
                if (!valid) CHECK(batch.src_ids.at(b, s) == Vocab::kPad);
            }
        }
    }
}

TEST_CASE("make_batches drops overlong pairs and encodes OOV to UNK") {
    ParallelCorpus c;
    c.pairs.push_back({{"a"}, {"a"}});
    c.pairs.push_back({{"a", "a", "a"}, {"a"}});  // src too long for max_len 2
    c.pairs.push_back({{"zzz"}, {"zzz"}});        // OOV on both sides
    Vocab v = build_vocab({{"a"}}, 100, 1);
    std::size_t dropped = 0;
    auto batches = make_batches(c, v, v, 8, 2, &dropped);
    CHECK(dropped == 1);
    REQUIRE(batches.size() == 1);
    CHECK(batches[0].batch_size() == 2);
    bool saw_unk = false;
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t s = 0; s < batches[0].src_ids.cols; ++s)
            saw_unk = saw_unk || batches[0].src_ids.at(b, s) == Vocab::kUnk;
    CHECK(saw_unk);

    ParallelCorpus all_long;
    all_long.pairs.push_back({{"a", "a", "a"}, {"a"}});
    CHECK_THROWS_AS(make_batches(all_long, v, v, 8, 2), ContractError);
}

TEST_CASE("encode/decode round-trips in-vocab tokens") {
    Vocab v = build_vocab({{"alpha", "beta", "gamma"}}, 100, 1);
    std::vector<std::string> tokens = {"gamma", "alpha", "beta"};
    for (const auto& t : tokens) CHECK(v.decode(v.encode(t)) == t);
    CHECK(v.decode(v.encode("missing")) == "<unk>");
}

TEST_CASE("load_parallel reads aligned files and filters empty pairs") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path();
    auto sp = dir / "mf_data_src.txt";
    auto tp = dir / "mf_data_tgt.txt";
    {
        std::ofstream s(sp), t(tp);
        s << "Hello world.\n\nSecond line\n";
        t << "Hallo Welt.\n\nZweite Zeile\n";
    }
    ParallelCorpus c = load_parallel(sp.string(), tp.string());
    REQUIRE(c.pairs.size() == 2);  // the empty middle pair is filtered
    CHECK(c.pairs[0].src == std::vector<std::string>{"hello", "world", "."});
    CHECK(c.pairs[1].tgt == std::vector<std::string>{"zweite", "zeile"});

    CHECK_THROWS_AS(load_parallel("/nonexistent/x.src", tp.string()), IoError);

    {
        std::ofstream t(tp, std::ios::app);
        t << "extra line\n";
    }
    CHECK_THROWS_AS(load_parallel(sp.string(), tp.string()), FormatError);
    fs::remove(sp);
    fs::remove(tp);
}
