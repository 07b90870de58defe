#include "miniformer/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace miniformer::metrics {

namespace {

constexpr double kSentenceEps = 1e-9;

void require_parallel(const Corpus& hyps, const Corpus& refs) {
    if (hyps.size() != refs.size())
        throw ContractError("metrics: hypothesis count " + std::to_string(hyps.size()) +
                            " does not match reference count " + std::to_string(refs.size()));
}

long clipped_matches(const Tokens& hyp, const Tokens& ref, std::size_t n) {
    NgramCounts hc = ngram_counts(hyp, n);
    NgramCounts rc = ngram_counts(ref, n);
    long matches = 0;
    for (const auto& [gram, count] : hc) {
        auto it = rc.find(gram);
        if (it != rc.end()) matches += std::min(count, it->second);
    }
    return matches;
}

long ngram_total(const Tokens& tokens, std::size_t n) {
    return tokens.size() >= n ? static_cast<long>(tokens.size() - n + 1) : 0;
}

double f_score(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

NgramCounts ngram_counts(const Tokens& tokens, std::size_t n) {
    if (n == 0) throw ContractError("ngram_counts: n must be >= 1");
    NgramCounts counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i)
        ++counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
    return counts;
}

std::pair<long, long> modified_precision(const Corpus& hyps, const Corpus& refs, std::size_t n) {
    require_parallel(hyps, refs);
    long matches = 0, total = 0;
    for (std::size_t s = 0; s < hyps.size(); ++s) {
        matches += clipped_matches(hyps[s], refs[s], n);
        total += ngram_total(hyps[s], n);
    }
    return {matches, total};
}

double brevity_penalty(std::size_t hyp_len_total, std::size_t ref_len_total) {
    if (hyp_len_total == 0) return 0.0;
    if (hyp_len_total >= ref_len_total) return 1.0;
    return std::exp(1.0 - static_cast<double>(ref_len_total) / static_cast<double>(hyp_len_total));
}

namespace {

double corpus_bp(const Corpus& hyps, const Corpus& refs) {
    std::size_t hyp_len = 0, ref_len = 0;
    for (const auto& h : hyps) hyp_len += h.size();
    for (const auto& r : refs) ref_len += r.size();
    return brevity_penalty(hyp_len, ref_len);
}

}  // namespace

double bleu_n(const Corpus& hyps, const Corpus& refs, std::size_t n) {
    auto [matches, total] = modified_precision(hyps, refs, n);
    const double p = total > 0 ? static_cast<double>(matches) / static_cast<double>(total) : 0.0;
    return corpus_bp(hyps, refs) * p;
}

double bleu_cumulative(const Corpus& hyps, const Corpus& refs, std::size_t max_n) {
    if (max_n == 0) throw ContractError("bleu_cumulative: max_n must be >= 1");
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= max_n; ++n) {
        auto [matches, total] = modified_precision(hyps, refs, n);
        if (matches == 0 || total == 0) return 0.0;
        log_sum += std::log(static_cast<double>(matches) / static_cast<double>(total));
    }
    return corpus_bp(hyps, refs) * std::exp(log_sum / static_cast<double>(max_n));
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
    if (a.empty() || b.empty()) return 0;
    // two-row DP over the classic recurrence
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            if (a[i - 1] == b[j - 1])
                cur[j] = prev[j - 1] + 1;
            else
                cur[j] = std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

namespace {

// Per-sentence numerator and both denominators for one ROUGE variant.
struct RougeTerms {
    long c = 0;
    long hyp_total = 0;
    long ref_total = 0;
};

RougeTerms rouge_terms(const Tokens& hyp, const Tokens& ref, RougeVariant variant) {
    RougeTerms t;
    switch (variant) {
        case RougeVariant::n1:
            t.c = clipped_matches(hyp, ref, 1);
            t.hyp_total = ngram_total(hyp, 1);
            t.ref_total = ngram_total(ref, 1);
            break;
        case RougeVariant::n2:
            t.c = clipped_matches(hyp, ref, 2);
            t.hyp_total = ngram_total(hyp, 2);
            t.ref_total = ngram_total(ref, 2);
            break;
        case RougeVariant::L:
            t.c = static_cast<long>(lcs_length(hyp, ref));
            t.hyp_total = static_cast<long>(hyp.size());
            t.ref_total = static_cast<long>(ref.size());
            break;
    }
    return t;
}

}  // namespace

PRF rouge(const Corpus& hyps, const Corpus& refs, RougeVariant variant) {
    require_parallel(hyps, refs);
    if (hyps.empty()) throw ContractError("rouge: empty corpus");
    long c = 0, hyp_total = 0, ref_total = 0;
    for (std::size_t s = 0; s < hyps.size(); ++s) {
        RougeTerms t = rouge_terms(hyps[s], refs[s], variant);
        c += t.c;
        hyp_total += t.hyp_total;
        ref_total += t.ref_total;
    }
    PRF out;
    out.p = hyp_total > 0 ? static_cast<double>(c) / static_cast<double>(hyp_total) : 0.0;
    out.r = ref_total > 0 ? static_cast<double>(c) / static_cast<double>(ref_total) : 0.0;
    out.f = f_score(out.p, out.r);
    return out;
}

MetricReport evaluate_corpus(const Corpus& hyps, const Corpus& refs, bool cumulative_bleu) {
    require_parallel(hyps, refs);
    if (hyps.empty()) throw ContractError("metrics: empty corpus");
    MetricReport report;
    for (std::size_t n = 1; n <= 4; ++n)
        report.bleu[n - 1] =
            cumulative_bleu ? bleu_cumulative(hyps, refs, n) : bleu_n(hyps, refs, n);
    report.rouge1 = rouge(hyps, refs, RougeVariant::n1);
    report.rouge2 = rouge(hyps, refs, RougeVariant::n2);
    report.rougeL = rouge(hyps, refs, RougeVariant::L);
    return report;
}

MetricReport evaluate_sentence_mean(const Corpus& hyps, const Corpus& refs, bool cumulative_bleu) {
    require_parallel(hyps, refs);
    if (hyps.empty()) throw ContractError("metrics: empty corpus");
    MetricReport total;
    for (std::size_t s = 0; s < hyps.size(); ++s) {
        const Corpus h = {hyps[s]};
        const Corpus r = {refs[s]};
        const double bp = brevity_penalty(hyps[s].size(), refs[s].size());
        double log_sum = 0.0;
        bool cum_zero = false;
        for (std::size_t n = 1; n <= 4; ++n) {
            auto [matches, denom] = modified_precision(h, r, n);
            const double p = static_cast<double>(matches) /
                             (static_cast<double>(denom) + kSentenceEps);
            if (cumulative_bleu) {
                if (matches == 0) cum_zero = true;
                if (!cum_zero) log_sum += std::log(p);
                total.bleu[n - 1] += cum_zero ? 0.0
                                             : bp * std::exp(log_sum / static_cast<double>(n));
            } else {
                total.bleu[n - 1] += bp * p;
            }
        }
        auto add_prf = [&](PRF& acc, RougeVariant variant) {
            RougeTerms t = rouge_terms(hyps[s], refs[s], variant);
            const double p = static_cast<double>(t.c) /
                             (static_cast<double>(t.hyp_total) + kSentenceEps);
            const double rr = static_cast<double>(t.c) /
                              (static_cast<double>(t.ref_total) + kSentenceEps);
            acc.p += p;
            acc.r += rr;
            acc.f += f_score(p, rr);
        };
        add_prf(total.rouge1, RougeVariant::n1);
        add_prf(total.rouge2, RougeVariant::n2);
        add_prf(total.rougeL, RougeVariant::L);
    }
    const double n = static_cast<double>(hyps.size());
    for (double& b : total.bleu) b /= n;
    for (PRF* prf : {&total.rouge1, &total.rouge2, &total.rougeL}) {
        prf->p /= n;
        prf->r /= n;
        prf->f /= n;
    }
    return total;
}

namespace {

std::string fmt4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

std::string prf_cell(const PRF& prf) {
    return "P:" + fmt4(prf.p) + " R:" + fmt4(prf.r) + " F:" + fmt4(prf.f);
}

}  // namespace

std::string format_table(const MetricReport& report, const std::string& system_name) {
    std::ostringstream os;
    const char* sep =
        "+------------+--------+--------+--------+--------+"
        "--------------------------+--------------------------+--------------------------+\n";
    auto pad = [](std::string s, std::size_t width) {
        if (s.size() < width) s += std::string(width - s.size(), ' ');
        return s;
    };
    os << sep;
    os << "| " << pad("Metric", 10) << " | BLEU-1 | BLEU-2 | BLEU-3 | BLEU-4 | "
       << pad("ROUGE-1", 24) << " | " << pad("ROUGE-2", 24) << " | " << pad("ROUGE-L", 24)
       << " |\n";
    os << sep;
    os << "| " << pad(system_name.substr(0, 10), 10) << " | " << fmt4(report.bleu[0]) << " | "
       << fmt4(report.bleu[1]) << " | " << fmt4(report.bleu[2]) << " | " << fmt4(report.bleu[3])
       << " | " << pad(prf_cell(report.rouge1), 24) << " | " << pad(prf_cell(report.rouge2), 24)
       << " | " << pad(prf_cell(report.rougeL), 24) << " |\n";
    os << sep;
    return os.str();
}

std::string format_keyvalues(const MetricReport& report) {
    std::ostringstream os;
    for (std::size_t n = 0; n < 4; ++n)
        os << "bleu" << n + 1 << "=" << fmt4(report.bleu[n]) << "\n";
    auto emit = [&](const char* name, const PRF& prf) {
        os << name << "_p=" << fmt4(prf.p) << "\n";
        os << name << "_r=" << fmt4(prf.r) << "\n";
        os << name << "_f=" << fmt4(prf.f) << "\n";
    };
    emit("rouge1", report.rouge1);
    emit("rouge2", report.rouge2);
    emit("rougeL", report.rougeL);
    return os.str();
}

Tokens score_tokenize(std::string_view line) {
    Tokens out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i == start) continue;
        std::string word(line.substr(start, i - start));
        for (char& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        out.push_back(std::move(word));
    }
    return out;
}

}  // namespace miniformer::metrics
