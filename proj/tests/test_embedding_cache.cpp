#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "spamdet/embedding_cache.hpp"
#include "spamdet/error.hpp"
#include "test_util.hpp"

using namespace spamdet;
using spamdet::testing::TempDir;

namespace {

EncoderConfig small_config() {
    EncoderConfig c;
    c.num_layers = 1;
    c.num_heads = 2;
    c.d_model = 16;
    c.d_ff = 32;
    c.vocab_size = 32;
    c.max_position = 16;
    return c;
}

Vocab small_vocab() {
    return Vocab({"[PAD]", "[UNK]", "[CLS]", "[SEP]", "free", "money", "click", "meeting", "tomorrow", "project",
                  "offer", "winner", "report", "lunch", "prize", "##s", "."});
}

std::vector<Sample> samples(std::size_t n) {
    const char *words[] = {"free money offer", "meeting tomorrow lunch", "click winner prizes",
                           "project report tomorrow", "offers money prize"};
    std::vector<Sample> out;
    for (std::size_t i = 0; i < n; ++i)
        out.push_back({"s" + std::to_string(i), Source::Enron, std::string(words[i % 5]) + " " + std::to_string(i),
                       static_cast<int>(i % 2)});
    return out;
}

} // namespace

TEST(EmbeddingCache, EmbedsEverySampleOnceAndResumes) {
    TempDir dir;
    const Encoder enc(init_random(small_config(), 5));
    const Vocab vocab = small_vocab();
    EmbedOptions opts;
    opts.seq_len = 8;
    opts.threads = 2;
    opts.flush_every = 3;
    const auto data = samples(10);
    const auto cache = dir / "c.emb";

    const auto first = embed_corpus(data, enc, vocab, opts, cache);
    EXPECT_EQ(first.computed, 10u);
    EXPECT_EQ(first.reused, 0u);
    const auto set = read_embedding_cache(cache);
    ASSERT_EQ(set.size(), 10u);
    EXPECT_EQ(set.header.n, 10u);
    EXPECT_EQ(set.header.d_model, 16u);
    EXPECT_EQ(set.header.seq_len, 8u);
    EXPECT_EQ(set.header.vocab_hash, vocab.fingerprint());
    EXPECT_EQ(set.header.weights_hash, enc.fingerprint());
    for (std::size_t i = 0; i < 10; ++i) {
        EXPECT_EQ(set.ids[i], data[i].id);
        EXPECT_EQ(set.labels[i], data[i].label);
    }

    const auto again = embed_corpus(data, enc, vocab, opts, cache);
    EXPECT_EQ(again.computed, 0u);
    EXPECT_EQ(again.reused, 10u);
    EXPECT_EQ(read_embedding_cache(cache).features, set.features);

    for (std::size_t i : {0u, 4u, 9u}) {
        const auto direct = enc.encode_cls(encode(model_input(data[i].text, opts), vocab, opts.seq_len));
        for (std::size_t j = 0; j < 16; ++j) EXPECT_NEAR(set.features(i, j), direct[j], 1e-6);
    }
}

TEST(EmbeddingCache, ThreadCountDoesNotChangeBytes) {
    TempDir dir;
    const Encoder enc(init_random(small_config(), 5));
    EmbedOptions opts;
    opts.seq_len = 8;
    opts.threads = 1;
    embed_corpus(samples(7), enc, small_vocab(), opts, dir / "a.emb");
    opts.threads = 3;
    opts.flush_every = 2;
    embed_corpus(samples(7), enc, small_vocab(), opts, dir / "b.emb");
    EXPECT_EQ(spamdet::testing::read_file(dir / "a.emb"), spamdet::testing::read_file(dir / "b.emb"));
}

TEST(EmbeddingCache, RefusesMismatchedEncoder) {
    TempDir dir;
    EmbedOptions opts;
    opts.seq_len = 8;
    embed_corpus(samples(4), Encoder(init_random(small_config(), 5)), small_vocab(), opts, dir / "c.emb");
    EXPECT_THROW(embed_corpus(samples(4), Encoder(init_random(small_config(), 6)), small_vocab(), opts, dir / "c.emb"),
                 CacheError);
    EXPECT_THROW(embed_corpus(samples(4), Encoder(init_random(small_config(), 5), {false}), small_vocab(), opts,
                              dir / "c.emb"),
                 CacheError);
    opts.seq_len = 9;
    EXPECT_THROW(embed_corpus(samples(4), Encoder(init_random(small_config(), 5)), small_vocab(), opts, dir / "c.emb"),
                 CacheError);
}

TEST(EmbeddingCache, TornRecordIsRecomputed) {
    TempDir dir;
    const Encoder enc(init_random(small_config(), 5));
    EmbedOptions opts;
    opts.seq_len = 8;
    const auto cache = dir / "c.emb";
    embed_corpus(samples(6), enc, small_vocab(), opts, cache);
    const auto full = spamdet::testing::read_file(cache);
    std::filesystem::resize_file(cache, full.size() - 10);
    EXPECT_THROW(read_embedding_cache(cache), CacheError);

    const auto r = embed_corpus(samples(6), enc, small_vocab(), opts, cache);
    EXPECT_EQ(r.computed, 1u);
    EXPECT_EQ(r.reused, 5u);
    EXPECT_EQ(spamdet::testing::read_file(cache), full);
}

TEST(EmbeddingCache, DuplicateIdsEmbeddedOnce) {
    TempDir dir;
    auto data = samples(3);
    data.push_back(data[1]);
    EmbedOptions opts;
    opts.seq_len = 8;
    const auto r = embed_corpus(data, Encoder(init_random(small_config(), 5)), small_vocab(), opts, dir / "c.emb");
    EXPECT_EQ(r.computed, 3u);
    EXPECT_EQ(read_embedding_cache(dir / "c.emb").size(), 3u);
}

TEST(EmbeddingCache, WriteReadSubsetConcat) {
    TempDir dir;
    EmbeddingSet set;
    set.header = {0, 3, 8, 11, 22};
    set.ids = {"a", "b", "c"};
    set.labels = {0, 1, 1};
    set.features = MatrixF(3, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    write_embedding_cache(dir / "x.emb", set);
    const auto back = read_embedding_cache(dir / "x.emb");
    EXPECT_EQ(back.header.n, 3u);
    EXPECT_EQ(back.ids, set.ids);
    EXPECT_EQ(back.labels, set.labels);
    EXPECT_EQ(back.features, set.features);
    // 40 header bytes, then 4 + 1 + 1 + 12 per record.
    EXPECT_EQ(std::filesystem::file_size(dir / "x.emb"), 40u + 3 * 18);

    const std::size_t rows[] = {2, 0};
    const auto sub = set.subset(rows);
    EXPECT_EQ(sub.ids, (std::vector<std::string>{"c", "a"}));
    EXPECT_EQ(sub.features.row(0)[0], 7.0f);

    const EmbeddingSet parts[] = {set, sub};
    const auto joined = concat(parts);
    EXPECT_EQ(joined.size(), 5u);
    EXPECT_EQ(joined.features(4, 2), 3.0f);
    auto other = sub;
    other.header.weights_hash = 23;
    const EmbeddingSet bad[] = {set, other};
    EXPECT_THROW(concat(bad), CacheError);
}

TEST(EmbeddingCache, RejectsForeignFile) {
    TempDir dir;
    spamdet::testing::write_file(dir / "x.emb", "not a cache at all, definitely not");
    EXPECT_THROW(read_embedding_cache(dir / "x.emb"), CacheError);
}

TEST(EmbeddingCache, SeqLenBeyondPositions) {
    TempDir dir;
    EmbedOptions opts;
    opts.seq_len = 17;
    EXPECT_THROW(embed_corpus(samples(2), Encoder(init_random(small_config(), 5)), small_vocab(), opts, dir / "c.emb"),
                 ConfigError);
}
