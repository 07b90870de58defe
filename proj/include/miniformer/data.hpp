#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "miniformer/error.hpp"

namespace miniformer::data {

// Dense id matrix, row-major. Entries beyond a row's length are PAD.
struct IdMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::int32_t> ids;

    IdMatrix() = default;
    IdMatrix(std::size_t r, std::size_t c, std::int32_t fill = 0)
        : rows(r), cols(c), ids(r * c, fill) {}

    std::int32_t& at(std::size_t r, std::size_t c) { return ids[r * cols + c]; }
    std::int32_t at(std::size_t r, std::size_t c) const { return ids[r * cols + c]; }
};

// Token<->id bijection with fixed reserved ids.
struct Vocab {
    static constexpr std::int32_t kPad = 0;
    static constexpr std::int32_t kBos = 1;
    static constexpr std::int32_t kEos = 2;
    static constexpr std::int32_t kUnk = 3;

    std::vector<std::string> id_to_token;
    std::unordered_map<std::string, std::int32_t> token_to_id;

    Vocab();

    std::size_t size() const { return id_to_token.size(); }
    std::int32_t encode(const std::string& token) const;  // UNK for unknown tokens
    const std::string& decode(std::int32_t id) const;     // IndexError when out of range
    void add(const std::string& token);

    // One non-reserved token per line; line number = id - 4.
    void save(const std::string& path) const;
    static Vocab load(const std::string& path);
};

struct SentencePair {
    std::vector<std::string> src;
    std::vector<std::string> tgt;
};

struct ParallelCorpus {
    std::vector<SentencePair> pairs;
    std::string provenance;
};

// Padded training batch. Target rows are BOS-prefixed and EOS-suffixed.
struct Batch {
    IdMatrix src_ids;
    IdMatrix tgt_ids;
    std::vector<std::size_t> src_lengths;
    std::vector<std::size_t> tgt_lengths;  // includes BOS and EOS
    std::vector<std::uint8_t> src_pad_mask;  // [B, S_max], 1 iff position < src_length

    std::size_t batch_size() const { return src_ids.rows; }
};

// Lowercases, splits on whitespace, then peels leading/trailing ASCII
// punctuation off each word into single-character tokens.
std::vector<std::string> tokenize(std::string_view line);

Vocab build_vocab(const std::vector<std::vector<std::string>>& sentences, std::size_t max_size,
                  std::size_t min_freq);

// Aligned line files; pairs where either side tokenizes to nothing are dropped.
ParallelCorpus load_parallel(const std::string& src_path, const std::string& tgt_path);

// Seeded shuffle, then split at floor(frac * N). Partition is exact.
std::pair<ParallelCorpus, ParallelCorpus> split_fraction(const ParallelCorpus& corpus, double frac,
                                                         std::uint64_t seed);

// The 4:1 train/test split. Requires at least 5 pairs.
std::pair<ParallelCorpus, ParallelCorpus> split_corpus(const ParallelCorpus& corpus,
                                                       std::uint64_t seed);

// Drops pairs longer than max_len on either side (count reported via
// `dropped`), sorts by source length, then chunks. The last short batch is kept.
std::vector<Batch> make_batches(const ParallelCorpus& corpus, const Vocab& vocab_src,
                                const Vocab& vocab_tgt, std::size_t batch_size,
                                std::size_t max_len, std::size_t* dropped = nullptr);

}  // namespace miniformer::data
