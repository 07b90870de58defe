#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "miniformer/metrics.hpp"
#include "testing.hpp"

using namespace miniformer;
using namespace miniformer::metrics;

namespace {

Tokens toks(const char* line) { return score_tokenize(line); }

// The committed 3-sentence oracle fixture. Every expected value below is
// hand-computed from the definitions:
//   hyp lengths 3+3+4 = 10, ref lengths 4+2+4 = 10 -> BP = 1
//   unigram clipped matches 3+1+4 = 8 of 10   -> p1 = 0.8
//   bigram matches 2+0+0 = 2 of 7             -> p2 = 2/7
//   trigram matches 1+0+0 = 1 of 4            -> p3 = 0.25
//   4-gram matches 0 of 1                     -> p4 = 0
//   LCS 3+1+3 = 7 of hyp 10 / ref 10          -> rougeL P=R=F=0.7
const Corpus kFixtureHyp = {toks("the cat sat"), toks("the the the"), toks("a b c d")};
const Corpus kFixtureRef = {toks("the cat sat down"), toks("the cat"), toks("a c b d")};

}  // namespace

TEST_CASE("ngram_counts with multiplicity") {
    NgramCounts uni = ngram_counts({"a", "b", "a"}, 1);
    CHECK(uni[{"a"}] == 2);
    CHECK(uni[{"b"}] == 1);

    NgramCounts bi = ngram_counts({"a", "b", "a"}, 2);
    CHECK(bi.size() == 2);
    CHECK(bi[{"a", "b"}] == 1);
    CHECK(bi[{"b", "a"}] == 1);

    CHECK(ngram_counts({"a", "b", "c"}, 4).empty());
    CHECK_THROWS_AS(ngram_counts({"a"}, 0), ContractError);
}

TEST_CASE("modified precision clips repeated n-grams") {
    auto [m1, t1] = modified_precision({toks("the cat")}, {toks("the cat")}, 1);
    CHECK(m1 == t1);

    auto [m2, t2] = modified_precision({toks("the the the")}, {toks("the cat")}, 1);
    CHECK(m2 == 1);
    CHECK(t2 == 3);

    auto [m3, t3] = modified_precision({toks("x y z")}, {toks("a b c")}, 1);
    CHECK(m3 == 0);
    CHECK(t3 == 3);

    CHECK_THROWS_AS(modified_precision({toks("a")}, {}, 1), ContractError);
}

TEST_CASE("brevity penalty") {
    CHECK(brevity_penalty(5, 5) == 1.0);
    CHECK(brevity_penalty(9, 5) == 1.0);
    CHECK(brevity_penalty(5, 10) == doctest::Approx(std::exp(-1.0)));
    CHECK(brevity_penalty(5, 10) == doctest::Approx(0.3679).epsilon(1e-3));
    CHECK(brevity_penalty(0, 10) == 0.0);
    CHECK(brevity_penalty(3, 4) == doctest::Approx(std::exp(1.0 - 4.0 / 3.0)));
    CHECK(brevity_penalty(3, 4) == doctest::Approx(0.7165).epsilon(1e-3));
}

TEST_CASE("bleu_n individual orders") {
    const Corpus same = {toks("the cat sat on the mat")};
    for (std::size_t n = 1; n <= 4; ++n) CHECK(bleu_n(same, same, n) == doctest::Approx(1.0));

    // p1 = 1 with a 3-vs-4 length ratio: BLEU-1 = e^{1-4/3}
    CHECK(bleu_n({toks("the cat sat")}, {toks("the cat sat down")}, 1) ==
          doctest::Approx(0.7165).epsilon(1e-3));

    // zero matches stay zero (no smoothing)
    CHECK(bleu_n({toks("x y")}, {toks("a b")}, 1) == 0.0);
}

TEST_CASE("fixture corpus matches the hand-computed oracle to 4 decimals") {
    MetricReport report = evaluate_corpus(kFixtureHyp, kFixtureRef);
    CHECK(report.bleu[0] == doctest::Approx(0.8).epsilon(1e-9));
    CHECK(report.bleu[1] == doctest::Approx(2.0 / 7.0).epsilon(1e-9));
    CHECK(report.bleu[2] == doctest::Approx(0.25).epsilon(1e-9));
    CHECK(report.bleu[3] == 0.0);
    CHECK(report.rouge1.p == doctest::Approx(0.8).epsilon(1e-9));
    CHECK(report.rouge1.r == doctest::Approx(0.8).epsilon(1e-9));
    CHECK(report.rouge1.f == doctest::Approx(0.8).epsilon(1e-9));
    CHECK(report.rouge2.p == doctest::Approx(2.0 / 7.0).epsilon(1e-9));
    CHECK(report.rouge2.f == doctest::Approx(2.0 / 7.0).epsilon(1e-9));
    CHECK(report.rougeL.p == doctest::Approx(0.7).epsilon(1e-9));
    CHECK(report.rougeL.r == doctest::Approx(0.7).epsilon(1e-9));
    CHECK(report.rougeL.f == doctest::Approx(0.7).epsilon(1e-9));
}

TEST_CASE("cumulative BLEU is the geometric mean over orders") {
    double cum2 = bleu_cumulative(kFixtureHyp, kFixtureRef, 2);
    CHECK(cum2 == doctest::Approx(std::sqrt(0.8 * 2.0 / 7.0)).epsilon(1e-9));
    CHECK(bleu_cumulative(kFixtureHyp, kFixtureRef, 4) == 0.0);  // p4 = 0
}

TEST_CASE("lcs_length hand cases") {
    CHECK(lcs_length(toks("a b c"), toks("a b c")) == 3);
    CHECK(lcs_length(toks("a b"), toks("x y")) == 0);
    CHECK(lcs_length(toks("a b c d"), toks("a c b d")) == 3);
    CHECK(lcs_length({}, toks("a")) == 0);
}

TEST_CASE("lcs_length agrees with brute-force enumeration") {
    std::mt19937_64 rng(51);
    std::uniform_int_distribution<int> len_dist(0, 10);
    std::uniform_int_distribution<int> sym_dist(0, 2);
    const std::vector<std::string> alphabet = {"x", "y", "z"};
    for (int trial = 0; trial < 100; ++trial) {
        Tokens a(len_dist(rng)), b(len_dist(rng));
        for (auto& t : a) t = alphabet[sym_dist(rng)];
        for (auto& t : b) t = alphabet[sym_dist(rng)];
        CHECK(lcs_length(a, b) == testutil::lcs_brute_force(a, b));
    }
}

TEST_CASE("rouge hand cases") {
    const Corpus h = {toks("a b")};
    const Corpus r = {toks("a b c")};
    PRF r1 = rouge(h, r, RougeVariant::n1);
    CHECK(r1.p == doctest::Approx(1.0));
    CHECK(r1.r == doctest::Approx(2.0 / 3.0));
    CHECK(r1.f == doctest::Approx(0.8));

    PRF same = rouge(h, h, RougeVariant::L);
    CHECK(same.p == 1.0);
    CHECK(same.r == 1.0);
    CHECK(same.f == 1.0);

    PRF zero = rouge({toks("x")}, {toks("a")}, RougeVariant::n1);
    CHECK(zero.f == 0.0);  // P+R = 0 guard

    CHECK_THROWS_AS(rouge({}, {}, RougeVariant::n1), ContractError);
}

TEST_CASE("rouge symmetry: P(h,r) equals R(r,h)") {
    std::mt19937_64 rng(52);
    std::uniform_int_distribution<int> len_dist(1, 8);
    std::uniform_int_distribution<int> sym_dist(0, 3);
    const std::vector<std::string> alphabet = {"a", "b", "c", "d"};
    Corpus h, r;
    for (int s = 0; s < 10; ++s) {
        Tokens x(len_dist(rng)), y(len_dist(rng));
        for (auto& t : x) t = alphabet[sym_dist(rng)];
        for (auto& t : y) t = alphabet[sym_dist(rng)];
        h.push_back(x);
        r.push_back(y);
    }
    for (auto variant : {RougeVariant::n1, RougeVariant::n2, RougeVariant::L}) {
        PRF fwd = rouge(h, r, variant);
        PRF bwd = rouge(r, h, variant);
        CHECK(fwd.p == doctest::Approx(bwd.r).epsilon(1e-12));
        CHECK(fwd.r == doctest::Approx(bwd.p).epsilon(1e-12));
    }
}

TEST_CASE("metric values stay in [0,1] and noise never increases matches") {
    std::mt19937_64 rng(53);
    std::uniform_int_distribution<int> len_dist(1, 9);
    std::uniform_int_distribution<int> sym_dist(0, 4);
    const std::vector<std::string> alphabet = {"a", "b", "c", "d", "e"};
    for (int trial = 0; trial < 20; ++trial) {
        Corpus h, r;
        for (int s = 0; s < 5; ++s) {
            Tokens x(len_dist(rng)), y(len_dist(rng));
            for (auto& t : x) t = alphabet[sym_dist(rng)];
            for (auto& t : y) t = alphabet[sym_dist(rng)];
            h.push_back(x);
            r.push_back(y);
        }
        MetricReport report = evaluate_corpus(h, r);
        for (double b : report.bleu) {
            CHECK(b >= 0.0);
            CHECK(b <= 1.0);
        }
        for (const PRF* prf : {&report.rouge1, &report.rouge2, &report.rougeL}) {
            for (double v : {prf->p, prf->r, prf->f}) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
        }
        // appending noise tokens never increases clipped match counts
        Corpus noisy = h;
        for (auto& sent : noisy) sent.push_back("qqq");
        for (std::size_t n = 1; n <= 2; ++n) {
            auto [m0, t0] = modified_precision(h, r, n);
            auto [m1, t1] = modified_precision(noisy, r, n);
            CHECK(m1 <= m0 + 0);  // qqq is out-of-reference
            CHECK(t1 >= t0);
        }
        // rouge-L numerator bound: C <= min(len(hyp), len(ref)) per sentence
        for (std::size_t s = 0; s < h.size(); ++s)
            CHECK(lcs_length(h[s], r[s]) <= std::min(h[s].size(), r[s].size()));
    }
}

TEST_CASE("identical corpora score 1.0 everywhere") {
    MetricReport report = evaluate_corpus(kFixtureRef, kFixtureRef);
    for (double b : report.bleu) CHECK(b == doctest::Approx(1.0));
    for (const PRF* prf : {&report.rouge1, &report.rouge2, &report.rougeL}) {
        CHECK(prf->p == doctest::Approx(1.0));
        CHECK(prf->r == doctest::Approx(1.0));
        CHECK(prf->f == doctest::Approx(1.0));
    }
}

TEST_CASE("metrics are pure: repeated evaluation is bit-identical") {
    MetricReport a = evaluate_corpus(kFixtureHyp, kFixtureRef);
    MetricReport b = evaluate_corpus(kFixtureHyp, kFixtureRef);
    for (std::size_t i = 0; i < 4; ++i) CHECK(a.bleu[i] == b.bleu[i]);
    CHECK(a.rougeL.f == b.rougeL.f);
}

TEST_CASE("sentence-mean variant stays finite on degenerate input") {
    MetricReport report = evaluate_sentence_mean({toks("a"), toks("b c")}, {toks("x"), toks("b")});
    for (double b : report.bleu) CHECK(std::isfinite(b));
    CHECK(report.rouge1.p >= 0.0);
}

TEST_CASE("report formatting emits parseable key=value lines") {
    MetricReport report = evaluate_corpus(kFixtureHyp, kFixtureRef);
    std::string kv = format_keyvalues(report);
    std::istringstream is(kv);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(is, line)) {
        auto eq = line.find('=');
        REQUIRE(eq != std::string::npos);
        const double value = std::stod(line.substr(eq + 1));
        CHECK(value >= 0.0);
        CHECK(value <= 1.0);
        ++lines;
    }
    CHECK(lines == 13);  // bleu1..4 + 3x3 rouge
    CHECK(kv.find("bleu1=0.8000") != std::string::npos);
    CHECK(kv.find("rougeL_f=0.7000") != std::string::npos);

    std::string table = format_table(report, "system");
    CHECK(table.find("BLEU-1") != std::string::npos);
    CHECK(table.find("ROUGE-L") != std::string::npos);
    CHECK(table.find("P:0.8000") != std::string::npos);
}

TEST_CASE("score_tokenize lowercases and splits on whitespace only") {
    CHECK(score_tokenize("The cat.") == Tokens{"the", "cat."});
    CHECK(score_tokenize("  a\tb  ") == Tokens{"a", "b"});
    CHECK(score_tokenize("").empty());
}
