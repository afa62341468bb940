#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "spamdet/corpus.hpp"
#include "spamdet/encoder.hpp"
#include "spamdet/tensor.hpp"
#include "spamdet/tokenizer.hpp"

namespace spamdet {

// On-disk layout (little-endian):
//   "SPDEMB01" | u64 n | u32 d_model | u32 seq_len | u64 vocab_hash | u64 weights_hash
//   n x ( u32 id_len | id bytes | u8 label | d_model x f32 )
inline constexpr char kEmbeddingMagic[8] = {'S', 'P', 'D', 'E', 'M', 'B', '0', '1'};

struct EmbeddingHeader {
    std::uint64_t n = 0;
    std::uint32_t d_model = 0;
    std::uint32_t seq_len = 0;
    std::uint64_t vocab_hash = 0;
    std::uint64_t weights_hash = 0;

    bool operator==(const EmbeddingHeader &) const = default;
};

// In-memory view of a cache: one [CLS] vector per sample.
struct EmbeddingSet {
    EmbeddingHeader header;
    std::vector<std::string> ids;
    std::vector<int> labels;
    MatrixF features; // n x d_model

    std::size_t size() const { return ids.size(); }
    EmbeddingSet subset(std::span<const std::size_t> rows) const;
};

EmbeddingSet read_embedding_cache(const std::filesystem::path &file);
void write_embedding_cache(const std::filesystem::path &file, const EmbeddingSet &set);

// Row-wise concatenation; header hashes must agree.
EmbeddingSet concat(std::span<const EmbeddingSet> parts);

struct EmbedOptions {
    std::size_t seq_len = 64;
    bool clean = true; // apply the short-word filter before tokenizing
    TokenizerOptions tokenizer;
    unsigned threads = 0; // 0: hardware concurrency
    std::size_t flush_every = 256;
};

struct EmbedReport {
    std::size_t computed = 0; // encoder forward passes run
    std::size_t reused = 0;   // rows already present in the cache
};

// The text fed to the tokenizer for one sample.
std::string model_input(std::string_view text, const EmbedOptions &options);

// Embeds every sample not yet in `cache` and appends it. An existing cache
// must carry the same d_model, seq_len and fingerprints, otherwise CacheError.
// A torn final record (interrupted run) is discarded and recomputed.
EmbedReport embed_corpus(std::span<const Sample> samples, const Encoder &encoder, const Vocab &vocab,
                         const EmbedOptions &options, const std::filesystem::path &cache,
                         const std::function<void(std::size_t done, std::size_t total)> &progress = {});

} // namespace spamdet
