#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "miniformer/error.hpp"

namespace miniformer::metrics {

using Tokens = std::vector<std::string>;
using Corpus = std::vector<Tokens>;

using NgramCounts = std::map<std::vector<std::string>, long>;

// All contiguous n-grams with multiplicity; empty when the sentence is shorter
// than n.
NgramCounts ngram_counts(const Tokens& tokens, std::size_t n);

// Corpus-summed clipped matches and hypothesis n-gram total.
std::pair<long, long> modified_precision(const Corpus& hyps, const Corpus& refs, std::size_t n);

// 1 when hyp >= ref; exp(1 - ref/hyp) otherwise; 0 for an empty hypothesis.
double brevity_penalty(std::size_t hyp_len_total, std::size_t ref_len_total);

// BP x p_n at exactly order n (the individual reading). The conventional
// cumulative geometric mean over orders 1..n is a separate call.
double bleu_n(const Corpus& hyps, const Corpus& refs, std::size_t n);
double bleu_cumulative(const Corpus& hyps, const Corpus& refs, std::size_t max_n);

std::size_t lcs_length(const Tokens& a, const Tokens& b);

struct PRF {
    double p = 0.0;
    double r = 0.0;
    double f = 0.0;
};

enum class RougeVariant { n1, n2, L };

PRF rouge(const Corpus& hyps, const Corpus& refs, RougeVariant variant);

struct MetricReport {
    std::array<double, 4> bleu{};  // BLEU-1..4
    PRF rouge1, rouge2, rougeL;
};

// Corpus-level scores (summed numerators/denominators across sentences).
MetricReport evaluate_corpus(const Corpus& hyps, const Corpus& refs, bool cumulative_bleu = false);
// Mean of per-sentence scores, denominators padded by 1e-9.
MetricReport evaluate_sentence_mean(const Corpus& hyps, const Corpus& refs,
                                    bool cumulative_bleu = false);

// One row of results in the layout of the experiment table.
std::string format_table(const MetricReport& report, const std::string& system_name);
// Machine-readable `metric=value` lines, 4 decimals.
std::string format_keyvalues(const MetricReport& report);

// Scorer tokenization: lowercase, split on whitespace only.
Tokens score_tokenize(std::string_view line);

}  // namespace miniformer::metrics
