#include "miniformer/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

namespace miniformer::data {

namespace {

bool is_ascii_punct(char c) {
    return static_cast<unsigned char>(c) < 128 && std::ispunct(static_cast<unsigned char>(c));
}

char lower_ascii(char c) {
    return static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
}

}  // namespace

std::vector<std::string> tokenize(std::string_view line) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i == start) continue;

        std::string word(line.substr(start, i - start));
        for (char& c : word) c = lower_ascii(c);

        std::size_t begin = 0, end = word.size();
        while (begin < end && is_ascii_punct(word[begin])) {
            out.emplace_back(1, word[begin]);
            ++begin;
        }
        std::string trail;
        while (end > begin && is_ascii_punct(word[end - 1])) {
            trail.push_back(word[end - 1]);
            --end;
        }
        if (end > begin) out.push_back(word.substr(begin, end - begin));
        for (auto it = trail.rbegin(); it != trail.rend(); ++it) out.emplace_back(1, *it);
    }
    return out;
}

Vocab::Vocab() {
    id_to_token = {"<pad>", "<bos>", "<eos>", "<unk>"};
    for (std::size_t i = 0; i < id_to_token.size(); ++i)
        token_to_id[id_to_token[i]] = static_cast<std::int32_t>(i);
}

std::int32_t Vocab::encode(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? kUnk : it->second;
}

const std::string& Vocab::decode(std::int32_t id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token.size())
        throw IndexError("vocab: id " + std::to_string(id) + " out of range [0, " +
                         std::to_string(id_to_token.size()) + ")");
    return id_to_token[static_cast<std::size_t>(id)];
}

void Vocab::add(const std::string& token) {
    if (token_to_id.count(token)) return;
    token_to_id[token] = static_cast<std::int32_t>(id_to_token.size());
    id_to_token.push_back(token);
}

void Vocab::save(const std::string& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("vocab: cannot write " + path);
    for (std::size_t i = 4; i < id_to_token.size(); ++i) f << id_to_token[i] << '\n';
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("vocab: cannot read " + path);
    Vocab v;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) throw FormatError("vocab: empty token line in " + path);
        v.add(line);
    }
    return v;
}

Vocab build_vocab(const std::vector<std::vector<std::string>>& sentences, std::size_t max_size,
                  std::size_t min_freq) {
    if (max_size <= 4)
        throw ContractError("build_vocab: max_size must exceed the 4 reserved ids");
    std::map<std::string, std::size_t> freq;
    for (const auto& sent : sentences)
        for (const auto& tok : sent) ++freq[tok];

    std::vector<std::pair<std::string, std::size_t>> items(freq.begin(), freq.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocab v;
    for (const auto& [tok, count] : items) {
        if (v.size() >= max_size) break;
        if (count < min_freq) break;  // items are frequency-sorted
        v.add(tok);
    }
    return v;
}

ParallelCorpus load_parallel(const std::string& src_path, const std::string& tgt_path) {
    std::ifstream fs(src_path);
    if (!fs) throw IoError("corpus: cannot read " + src_path);
    std::ifstream ft(tgt_path);
    if (!ft) throw IoError("corpus: cannot read " + tgt_path);

    ParallelCorpus corpus;
    corpus.provenance = src_path + " + " + tgt_path;
    std::string src_line, tgt_line;
    std::size_t line_no = 0;
    while (true) {
        const bool got_src = static_cast<bool>(std::getline(fs, src_line));
        const bool got_tgt = static_cast<bool>(std::getline(ft, tgt_line));
        if (!got_src && !got_tgt) break;
        if (got_src != got_tgt)
            throw FormatError("corpus: line counts differ between " + src_path + " and " +
                              tgt_path);
        ++line_no;
        SentencePair pair{tokenize(src_line), tokenize(tgt_line)};
        if (pair.src.empty() || pair.tgt.empty()) continue;
        corpus.pairs.push_back(std::move(pair));
    }
    (void)line_no;
    return corpus;
}

std::pair<ParallelCorpus, ParallelCorpus> split_fraction(const ParallelCorpus& corpus, double frac,
                                                         std::uint64_t seed) {
    std::vector<std::size_t> order(corpus.pairs.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    const auto cut = static_cast<std::size_t>(frac * static_cast<double>(order.size()));
    ParallelCorpus first, second;
    first.provenance = corpus.provenance;
    second.provenance = corpus.provenance;
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < cut ? first : second).pairs.push_back(corpus.pairs[order[i]]);
    return {std::move(first), std::move(second)};
}

std::pair<ParallelCorpus, ParallelCorpus> split_corpus(const ParallelCorpus& corpus,
                                                       std::uint64_t seed) {
    if (corpus.pairs.size() < 5)
        throw ContractError("split_corpus: need at least 5 pairs for a 4:1 split, got " +
                            std::to_string(corpus.pairs.size()));
    return split_fraction(corpus, 0.8, seed);
}

std::vector<Batch> make_batches(const ParallelCorpus& corpus, const Vocab& vocab_src,
                                const Vocab& vocab_tgt, std::size_t batch_size,
                                std::size_t max_len, std::size_t* dropped) {
    if (batch_size == 0) throw ContractError("make_batches: batch_size must be >= 1");

    std::vector<const SentencePair*> kept;
    std::size_t n_dropped = 0;
    for (const auto& pair : corpus.pairs) {
        if (pair.src.size() > max_len || pair.tgt.size() > max_len) {
            ++n_dropped;
            continue;
        }
        kept.push_back(&pair);
    }
    if (dropped) *dropped = n_dropped;
    if (kept.empty()) throw ContractError("make_batches: every pair exceeded max_len " +
                                          std::to_string(max_len));

    std::stable_sort(kept.begin(), kept.end(),
                     [](const SentencePair* a, const SentencePair* b) {
                         return a->src.size() < b->src.size();
                     });

    std::vector<Batch> batches;
    for (std::size_t begin = 0; begin < kept.size(); begin += batch_size) {
        const std::size_t count = std::min(batch_size, kept.size() - begin);
        std::size_t s_max = 0, t_max = 0;
        for (std::size_t i = 0; i < count; ++i) {
            s_max = std::max(s_max, kept[begin + i]->src.size());
            t_max = std::max(t_max, kept[begin + i]->tgt.size() + 2);  // BOS ... EOS
        }

        Batch batch;
        batch.src_ids = IdMatrix(count, s_max, Vocab::kPad);
        batch.tgt_ids = IdMatrix(count, t_max, Vocab::kPad);
        batch.src_lengths.resize(count);
        batch.tgt_lengths.resize(count);
        batch.src_pad_mask.assign(count * s_max, 0);
        for (std::size_t i = 0; i < count; ++i) {
            const SentencePair& pair = *kept[begin + i];
            batch.src_lengths[i] = pair.src.size();
            for (std::size_t j = 0; j < pair.src.size(); ++j) {
                batch.src_ids.at(i, j) = vocab_src.encode(pair.src[j]);
                batch.src_pad_mask[i * s_max + j] = 1;
            }
            batch.tgt_lengths[i] = pair.tgt.size() + 2;
            batch.tgt_ids.at(i, 0) = Vocab::kBos;
            for (std::size_t j = 0; j < pair.tgt.size(); ++j)
                batch.tgt_ids.at(i, j + 1) = vocab_tgt.encode(pair.tgt[j]);
            batch.tgt_ids.at(i, pair.tgt.size() + 1) = Vocab::kEos;
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

}  // namespace miniformer::data
