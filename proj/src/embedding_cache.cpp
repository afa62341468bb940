#include "spamdet/embedding_cache.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <thread>
#include <unordered_set>

#include "spamdet/error.hpp"
#include "spamdet/preprocess.hpp"

namespace fs = std::filesystem;

namespace spamdet {

namespace {

constexpr std::size_t kHeaderBytes = 8 + 8 + 4 + 4 + 8 + 8;

template <typename T>
void put(std::string &buf, T v) {
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        v = std::bit_cast<T>(bytes);
    }
    buf.append(reinterpret_cast<const char *>(&v), sizeof v);
}

template <typename T>
bool get(std::istream &in, T &v) {
    in.read(reinterpret_cast<char *>(&v), sizeof v);
    if (!in) return false;
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        v = std::bit_cast<T>(bytes);
    }
    return true;
}

std::string encode_header(const EmbeddingHeader &h) {
    std::string buf(kEmbeddingMagic, sizeof kEmbeddingMagic);
    put(buf, h.n);
    put(buf, h.d_model);
    put(buf, h.seq_len);
    put(buf, h.vocab_hash);
    put(buf, h.weights_hash);
    return buf;
}

void encode_record(std::string &buf, const std::string &id, int label, std::span<const float> values) {
    put(buf, static_cast<std::uint32_t>(id.size()));
    buf += id;
    put(buf, static_cast<std::uint8_t>(label));
    for (float f : values) put(buf, f);
}

struct Scan {
    EmbeddingSet set;
    std::uint64_t valid_bytes = 0; // offset just past the last complete record
};

Scan scan(const fs::path &file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw CacheError("cannot read embedding cache " + file.string());
    char magic[8];
    in.read(magic, sizeof magic);
    EmbeddingHeader h;
    if (!in || std::memcmp(magic, kEmbeddingMagic, sizeof magic) != 0 || !get(in, h.n) || !get(in, h.d_model) ||
        !get(in, h.seq_len) || !get(in, h.vocab_hash) || !get(in, h.weights_hash))
        throw CacheError(file.string() + " is not an embedding cache");

    Scan s;
    s.set.header = h;
    s.valid_bytes = kHeaderBytes;
    std::vector<float> values;
    std::vector<float> row(h.d_model);
    for (;;) {
        std::uint32_t len;
        if (!get(in, len)) break;
        std::string id(len, '\0');
        in.read(id.data(), len);
        std::uint8_t label;
        if (!in || !get(in, label)) break;
        bool ok = true;
        for (auto &f : row)
            if (!get(in, f)) {
                ok = false;
                break;
            }
        if (!ok) break;
        if (label > 1) throw CacheError(file.string() + ": record '" + id + "' has label " + std::to_string(label));
        s.set.ids.push_back(std::move(id));
        s.set.labels.push_back(label);
        values.insert(values.end(), row.begin(), row.end());
        s.valid_bytes = static_cast<std::uint64_t>(in.tellg());
    }
    s.set.features = MatrixF(s.set.ids.size(), h.d_model, std::move(values));
    s.set.header.n = s.set.ids.size();
    return s;
}

} // namespace

EmbeddingSet EmbeddingSet::subset(std::span<const std::size_t> rows) const {
    EmbeddingSet out;
    out.header = header;
    out.header.n = rows.size();
    out.features = MatrixF(rows.size(), features.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.ids.push_back(ids.at(rows[i]));
        out.labels.push_back(labels.at(rows[i]));
        std::copy_n(features.row(rows[i]).begin(), features.cols(), out.features.row(i).begin());
    }
    return out;
}

EmbeddingSet read_embedding_cache(const fs::path &file) {
    Scan s = scan(file);
    std::error_code ec;
    if (s.valid_bytes != fs::file_size(file, ec))
        throw CacheError(file.string() + " ends with an incomplete record");
    return std::move(s.set);
}

void write_embedding_cache(const fs::path &file, const EmbeddingSet &set) {
    EmbeddingHeader h = set.header;
    h.n = set.size();
    h.d_model = static_cast<std::uint32_t>(set.features.cols());
    std::string buf = encode_header(h);
    for (std::size_t i = 0; i < set.size(); ++i) encode_record(buf, set.ids[i], set.labels[i], set.features.row(i));
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw CacheError("cannot write embedding cache " + file.string());
}

EmbeddingSet concat(std::span<const EmbeddingSet> parts) {
    if (parts.empty()) throw CacheError("nothing to concatenate");
    EmbeddingSet out;
    out.header = parts.front().header;
    std::vector<float> values;
    for (const auto &p : parts) {
        if (p.header.d_model != out.header.d_model || p.header.seq_len != out.header.seq_len ||
            p.header.weights_hash != out.header.weights_hash || p.header.vocab_hash != out.header.vocab_hash)
            throw CacheError("embedding caches built with different encoders cannot be combined");
        out.ids.insert(out.ids.end(), p.ids.begin(), p.ids.end());
        out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
        values.insert(values.end(), p.features.data().begin(), p.features.data().end());
    }
    out.header.n = out.ids.size();
    out.features = MatrixF(out.ids.size(), out.header.d_model, std::move(values));
    return out;
}

std::string model_input(std::string_view text, const EmbedOptions &options) {
    return options.clean ? clean(text) : std::string(text);
}

EmbedReport embed_corpus(std::span<const Sample> samples, const Encoder &encoder, const Vocab &vocab,
                         const EmbedOptions &options, const fs::path &cache,
                         const std::function<void(std::size_t, std::size_t)> &progress) {
    if (options.seq_len > static_cast<std::size_t>(encoder.config().max_position))
        throw ConfigError("seq_len " + std::to_string(options.seq_len) + " exceeds max_position " +
                          std::to_string(encoder.config().max_position));
    if (vocab.size() > static_cast<std::size_t>(encoder.config().vocab_size))
        throw ConfigError("vocabulary has more tokens than the encoder's embedding table");

    EmbeddingHeader header{0, static_cast<std::uint32_t>(encoder.dim()), static_cast<std::uint32_t>(options.seq_len),
                           vocab.fingerprint(), encoder.fingerprint()};

    EmbedReport report;
    std::unordered_set<std::string> done;
    std::error_code ec;
    if (fs::exists(cache, ec)) {
        Scan s = scan(cache);
        EmbeddingHeader existing = s.set.header;
        existing.n = 0;
        if (!(existing == header))
            throw CacheError(cache.string() + " was built with a different encoder, vocabulary or seq_len; "
                                              "refusing to append");
        done.insert(s.set.ids.begin(), s.set.ids.end());
        header.n = s.set.ids.size();
        fs::resize_file(cache, s.valid_bytes);
    } else {
        std::ofstream out(cache, std::ios::binary | std::ios::trunc);
        const std::string h = encode_header(header);
        out.write(h.data(), static_cast<std::streamsize>(h.size()));
        if (!out) throw CacheError("cannot create embedding cache " + cache.string());
    }

    std::vector<const Sample *> todo;
    for (const auto &s : samples) {
        if (done.count(s.id)) {
            ++report.reused;
        } else if (done.insert(s.id).second) {
            todo.push_back(&s);
        }
    }

    std::fstream file(cache, std::ios::binary | std::ios::in | std::ios::out);
    if (!file) throw CacheError("cannot open embedding cache " + cache.string());

    const unsigned threads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
    const std::size_t chunk = std::max<std::size_t>(1, options.flush_every);
    std::vector<std::vector<float>> rows;
    for (std::size_t begin = 0; begin < todo.size(); begin += chunk) {
        const std::size_t end = std::min(todo.size(), begin + chunk);
        rows.assign(end - begin, {});
        auto work = [&](std::size_t worker) {
            for (std::size_t i = begin + worker; i < end; i += threads) {
                const auto tokens = encode(model_input(todo[i]->text, options), vocab, options.seq_len,
                                           options.tokenizer);
                rows[i - begin] = encoder.encode_cls(tokens);
            }
        };
        if (threads == 1) {
            work(0);
        } else {
            std::vector<std::jthread> pool;
            for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
        }

        std::string buf;
        for (std::size_t i = begin; i < end; ++i) encode_record(buf, todo[i]->id, todo[i]->label, rows[i - begin]);
        file.seekp(0, std::ios::end);
        file.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        header.n += end - begin;
        const std::string h = encode_header(header);
        file.seekp(0);
        file.write(h.data(), static_cast<std::streamsize>(h.size()));
        file.flush();
        if (!file) throw CacheError("write failed on " + cache.string() + " near sample " + todo[begin]->id);
        report.computed += end - begin;
        if (progress) progress(report.reused + report.computed, samples.size());
    }
    return report;
}

} // namespace spamdet
